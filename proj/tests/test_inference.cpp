#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "trendmine/inference.hpp"
#include "trendmine/rng.hpp"
#include "trendmine/stats.hpp"

using namespace trendmine;
using namespace trendmine::inference;

namespace {

DesignMatrix make_design(const Eigen::MatrixXd& predictors,
                         const Eigen::VectorXd& target) {
    DesignMatrix design;
    design.predictors = predictors;
    design.target = target;
    for (Eigen::Index j = 0; j < predictors.cols(); ++j)
        design.columns.push_back("item" + std::to_string(j + 1));
    for (Eigen::Index i = 0; i < predictors.rows(); ++i)
        design.row_students.push_back("s" + std::to_string(i));
    design.positive_label = ArchetypeLabel::stay_high();
    design.negative_label = ArchetypeLabel::decrease();
    design.baseline_test_id = "base";
    return design;
}

double model_log_lik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& beta) {
    double ll = 0.0;
    const Eigen::VectorXd eta = X * beta;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double e = eta[i];
        ll += y[i] * e - (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
    }
    return ll;
}

// 20-row fixture with overlapping classes; reference fit computed externally
// with a high-precision quasi-Newton optimizer.
DesignMatrix frozen_design() {
    Eigen::MatrixXd X(20, 2);
    X << 0.03, 1.36, 1.22, -0.51, -0.30, -0.53, 0.57, -0.06, 0.75, -1.85, 1.57, -0.10,
        0.68, -0.14, -0.38, 0.46, 0.82, -0.20, -0.15, 0.69, -0.87, -1.51, 0.39, -0.67,
        -1.92, -0.81, -0.47, -1.19, -1.49, 0.04, 0.90, -0.23, -0.74, 0.38, 0.72, -0.30,
        0.54, 1.04, -0.21, -0.81;
    Eigen::VectorXd y(20);
    y << 1, 1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1;
    return make_design(X, y);
}

}  // namespace

TEST_CASE("logistic fit reproduces a frozen reference") {
    const LogisticFit fit = fit_logistic(frozen_design());
    REQUIRE(fit.converged);
    CHECK(fit.intercept.beta == doctest::Approx(1.8228115988201101).epsilon(1e-7));
    CHECK(fit.coef.at("item1").beta == doctest::Approx(0.5354054577654687).epsilon(1e-7));
    CHECK(fit.coef.at("item2").beta == doctest::Approx(0.18138613392706532).epsilon(1e-7));
    CHECK(fit.intercept.se == doctest::Approx(0.7059315855789058).epsilon(1e-6));
    CHECK(fit.coef.at("item1").se == doctest::Approx(0.6984474022769799).epsilon(1e-6));
    CHECK(fit.coef.at("item2").se == doctest::Approx(0.8200530017764694).epsilon(1e-6));
    CHECK(fit.intercept.p == doctest::Approx(0.00981907861702444).epsilon(1e-6));
    CHECK(fit.coef.at("item1").p == doctest::Approx(0.44334008539180736).epsilon(1e-6));
    CHECK(fit.coef.at("item2").p == doctest::Approx(0.8249458145827625).epsilon(1e-6));
    CHECK(fit.log_lik == doctest::Approx(-8.11057499796263).epsilon(1e-9));
    CHECK(fit.null_log_lik == doctest::Approx(-8.45418175611982).epsilon(1e-9));
    CHECK(fit.mcfadden_r2 == doctest::Approx(0.04064340796889765).epsilon(1e-7));
    CHECK(fit.lr_test_p == doctest::Approx(0.7092077633888665).epsilon(1e-7));
}

TEST_CASE("intercept-only fit is the closed-form log odds") {
    Eigen::MatrixXd empty(10, 0);
    Eigen::VectorXd y(10);
    y << 1, 1, 1, 0, 0, 0, 0, 0, 0, 0;  // 30% positives
    const LogisticFit fit = fit_logistic(make_design(empty, y));
    CHECK(fit.intercept.beta == doctest::Approx(std::log(3.0 / 7.0)).epsilon(1e-9));
    CHECK(fit.mcfadden_r2 == 0.0);
    CHECK(fit.lr_test_p == 1.0);
}

TEST_CASE("null predictor has near-zero coefficient") {
    Rng rng(21);
    Eigen::MatrixXd X(60, 1);
    Eigen::VectorXd y(60);
    for (int i = 0; i < 60; ++i) {
        X(i, 0) = rng.normal();
        y(i) = i % 2;  // balanced target independent of the predictor
    }
    const LogisticFit fit = fit_logistic(make_design(X, y));
    CHECK(std::fabs(fit.coef.at("item1").beta) < 0.7);
    CHECK(fit.coef.at("item1").p > 0.05);
    CHECK(fit.mcfadden_r2 < 0.05);
}

TEST_CASE("perfect separation raises a numeric error naming the column") {
    Eigen::MatrixXd X(12, 1);
    Eigen::VectorXd y(12);
    for (int i = 0; i < 12; ++i) {
        X(i, 0) = i < 6 ? 0.0 : 1.0;
        y(i) = i < 6 ? 0.0 : 1.0;
    }
    try {
        fit_logistic(make_design(X, y));
        FAIL("expected separation error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("item1") != std::string::npos);
    }

    // the ridge fallback produces a finite flagged fit instead
    const LogisticFit ridged = fit_logistic(make_design(X, y), 100, 1e-8, true);
    CHECK(ridged.ridge_used);
    CHECK(std::isfinite(ridged.coef.at("item1").beta));
}

TEST_CASE("analytic gradient vanishes and matches finite differences") {
    const DesignMatrix design = frozen_design();
    const LogisticFit fit = fit_logistic(design);

    const Eigen::Index n = design.predictors.rows();
    Eigen::MatrixXd X(n, 3);
    X.col(0).setOnes();
    X.rightCols(2) = design.predictors;
    Eigen::VectorXd beta(3);
    beta << fit.intercept.beta, fit.coef.at("item1").beta, fit.coef.at("item2").beta;

    Eigen::VectorXd prob = (X * beta).unaryExpr(
        [](double e) { return 1.0 / (1.0 + std::exp(-e)); });
    const Eigen::VectorXd grad = X.transpose() * (design.target - prob);
    CHECK(grad.norm() < 1e-6);

    const double h = 1e-5;
    for (int j = 0; j < 3; ++j) {
        Eigen::VectorXd up = beta, down = beta;
        up[j] += h;
        down[j] -= h;
        const double fd = (model_log_lik(X, design.target, up) -
                           model_log_lik(X, design.target, down)) /
                          (2 * h);
        CHECK(std::fabs(fd - grad[j]) <=
              1e-4 * std::max(1.0, std::fabs(grad[j])));
    }
}

TEST_CASE("row permutation and label swap symmetries") {
    const DesignMatrix design = frozen_design();
    const LogisticFit fit = fit_logistic(design);

    // permute rows
    DesignMatrix permuted = design;
    const Eigen::Index n = design.predictors.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        permuted.predictors.row(i) = design.predictors.row(n - 1 - i);
        permuted.target[i] = design.target[n - 1 - i];
    }
    const LogisticFit fit_permuted = fit_logistic(permuted);
    CHECK(fit_permuted.intercept.beta == doctest::Approx(fit.intercept.beta).epsilon(1e-10));
    CHECK(fit_permuted.coef.at("item1").beta ==
          doctest::Approx(fit.coef.at("item1").beta).epsilon(1e-10));

    // swap positive/negative classes
    DesignMatrix swapped = design;
    swapped.target = Eigen::VectorXd::Ones(n) - design.target;
    const LogisticFit fit_swapped = fit_logistic(swapped);
    CHECK(fit_swapped.intercept.beta == doctest::Approx(-fit.intercept.beta).epsilon(1e-8));
    CHECK(fit_swapped.coef.at("item1").beta ==
          doctest::Approx(-fit.coef.at("item1").beta).epsilon(1e-8));
    CHECK(fit_swapped.coef.at("item2").beta ==
          doctest::Approx(-fit.coef.at("item2").beta).epsilon(1e-8));
}

TEST_CASE("variable reduction drops degenerate and collinear columns") {
    Rng rng(17);
    const int n = 40;
    Eigen::MatrixXd X(n, 4);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;                        // zero variance (everyone correct)
        X(i, 1) = rng.bernoulli(0.5) ? 1 : 0;
        X(i, 2) = X(i, 1);                    // duplicate of item2
        X(i, 3) = rng.bernoulli(0.4) ? 1 : 0;
        y(i) = rng.bernoulli(0.5) ? 1 : 0;
    }
    const DesignMatrix reduced = reduce_variables(make_design(X, y));
    CHECK(reduced.columns == std::vector<std::string>{"item2", "item4"});
    REQUIRE(reduced.removal_log.size() == 2);
    CHECK(reduced.removal_log[0].item_id == "item1");
    CHECK(reduced.removal_log[0].reason == RemovalEntry::Reason::zero_variance);
    CHECK(reduced.removal_log[1].item_id == "item3");
    CHECK(reduced.removal_log[1].reason == RemovalEntry::Reason::collinear);
}

TEST_CASE("stepwise removal eliminates the planted high-VIF column first") {
    Rng rng(23);
    const int n = 300;
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    const double noise_sd = std::sqrt((1.0 - 0.95) / 0.95);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        X(i, 2) = rng.normal();
        X(i, 1) = X(i, 0) + noise_sd * rng.normal();  // R^2 vs others ~ 0.95
        y(i) = rng.bernoulli(0.5) ? 1 : 0;
    }
    // with threshold 10 both members of the correlated pair exceed it;
    // the larger one goes first and the survivor then passes
    const std::vector<double> before = stats::vif(X);
    CHECK(before[1] > 10.0);
    const DesignMatrix reduced = reduce_variables(make_design(X, y), 10.0);
    REQUIRE(reduced.removal_log.size() == 1);
    CHECK(reduced.removal_log[0].reason == RemovalEntry::Reason::vif);
    CHECK(reduced.removal_log[0].detail > 10.0);
    const std::vector<double> after = stats::vif(reduced.predictors);
    for (double v : after) CHECK(v <= 10.0);
}

TEST_CASE("reduction keeps at least one column or errors") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(10, 2);  // both zero variance
    Eigen::VectorXd y = Eigen::VectorXd::Zero(10);
    for (int i = 0; i < 5; ++i) y(i) = 1;
    CHECK_THROWS_AS(reduce_variables(make_design(X, y)), input_error);
}

TEST_CASE("significance tiers follow the strict thresholds") {
    Manifest manifest;
    ManifestEntry entry;
    entry.test.id = "base";
    entry.test.organization = "orgA";
    entry.test.subject = Subject::national_language();
    entry.test.grade = 5;
    entry.test.year = 2014;
    entry.items = {{"item1", "topic one"}, {"item2", "topic two"},
                   {"item3", "topic three"}, {"item4", "topic four"}};
    manifest.tests.push_back(entry);

    LogisticFit fit;
    fit.converged = true;
    fit.coef["item1"] = {1.98, 0.8, 0.02};
    fit.coef["item2"] = {2.47, 0.9, 0.005};
    fit.coef["item3"] = {1.14, 0.7, 0.10};
    fit.coef["item4"] = {0.30, 0.6, 0.62};

    DesignMatrix design;
    design.columns = {"item1", "item2", "item3", "item4"};
    design.baseline_test_id = "base";

    const std::vector<TierEntry> tiers = significance_tiers(fit, manifest, design);
    REQUIRE(tiers.size() == 4);
    CHECK(tiers[0].tier == "*");
    CHECK(tiers[1].tier == "**");
    CHECK(tiers[2].tier == "");  // boundary: p = .10 exactly earns no tier
    CHECK(tiers[3].tier == "");
    CHECK(tiers[0].topic == "topic one");

    design.columns.push_back("item9");
    fit.coef["item9"] = {0.1, 0.2, 0.9};
    CHECK_THROWS_AS(significance_tiers(fit, manifest, design), input_error);
}

TEST_CASE("common factors intersect by exact topic wording across cohorts") {
    // two cohorts answer different item ids that share topic strings
    auto tier = [](const std::string& id, const std::string& topic, double coef,
                   double p) {
        TierEntry entry;
        entry.item_id = id;
        entry.topic = topic;
        entry.coef = coef;
        entry.p = p;
        return entry;
    };

    const std::string interpret =
        "interpret the information of the text and make a supplementary statement";
    std::vector<TierEntry> cohort1 = {
        tier("2014-24", interpret, 1.98, 0.02),
        tier("2014-20", "read the text considering the connection between sentences",
             0.55, 0.25),
    };
    std::vector<TierEntry> cohort2 = {
        tier("2015-3", "collaborate with others considering the others' ideas", 2.32,
             0.03),
        tier("2015-12", "interpret Japanese grammar", 1.69, 0.04),
        tier("2015-13", "interpret Japanese grammar", 2.47, 0.004),
        tier("2015-22", "read the text considering the connection between paragraphs",
             1.14, 0.08),
        tier("2015-24", interpret, 2.85, 0.004),
        tier("2015-26", "use a paragraph structure", -1.51, 0.09),
    };
    const FactorReport report =
        extract_common_factors({{"g1", cohort1}, {"g2", cohort2}}, 0.10);
    REQUIRE(report.common_factors.size() == 1);
    CHECK(report.common_factors[0].topic == interpret);
    CHECK(report.common_factors[0].per_cohort.at("g1")[0].first == "2014-24");
    CHECK(report.common_factors[0].per_cohort.at("g2")[0].first == "2015-24");

    // second contrast: two shared topics out of several significant items
    std::vector<TierEntry> low1 = {
        tier("2014-17", "read a character's feelings", -2.00, 0.02),
        tier("2014-19", "read a character's feelings depending on the purpose", 1.24,
             0.09),
        tier("2014-24", interpret, 3.01, 0.07),
        tier("2014-25", "write a sentence within a word limit", 2.53, 0.01),
    };
    std::vector<TierEntry> low2 = {
        tier("2015-7", "read a kanji character", -3.82, 0.03),
        tier("2015-9", "write a kanji character", 2.83, 0.05),
        tier("2015-13", "interpret Japanese grammar", -2.77, 0.06),
        tier("2015-18", "read the situation of the text", 2.26, 0.09),
        tier("2015-19", "read a character's feelings depending on the purpose", 2.46,
             0.08),
        tier("2015-21", "read the text precisely", -3.03, 0.07),
        tier("2015-25", "write a sentence within a word limit", 2.72, 0.08),
        tier("2015-27", "summarize the content of the interview considering the purpose",
             2.62, 0.07),
    };
    const FactorReport second =
        extract_common_factors({{"g1", low1}, {"g2", low2}}, 0.10);
    std::vector<std::string> topics;
    for (const CommonFactor& factor : second.common_factors)
        topics.push_back(factor.topic);
    std::sort(topics.begin(), topics.end());
    CHECK(topics ==
          std::vector<std::string>{
              "read a character's feelings depending on the purpose",
              "write a sentence within a word limit"});

    // disjoint significant sets yield an empty (still valid) result
    const FactorReport empty =
        extract_common_factors({{"g1", low1}, {"g2", cohort2}}, 0.01);
    CHECK(empty.common_factors.empty());
}

TEST_CASE("three cohorts sharing one planted factor return exactly it") {
    auto tier = [](const std::string& id, const std::string& topic, double p) {
        TierEntry entry;
        entry.item_id = id;
        entry.topic = topic;
        entry.coef = 1.0;
        entry.p = p;
        return entry;
    };
    std::vector<std::pair<std::string, std::vector<TierEntry>>> cohorts;
    for (int c = 0; c < 3; ++c) {
        std::vector<TierEntry> tiers = {
            tier("shared", "planted skill", 0.01),
            tier("noise" + std::to_string(c), "stray skill " + std::to_string(c), 0.02),
        };
        cohorts.emplace_back("c" + std::to_string(c), tiers);
    }
    const FactorReport report = extract_common_factors(cohorts, 0.10);
    REQUIRE(report.common_factors.size() == 1);
    CHECK(report.common_factors[0].topic == "planted skill");
    CHECK(report.common_factors[0].per_cohort.size() == 3);
}

TEST_CASE("common-factor extraction needs two cohorts") {
    CHECK_THROWS_AS(extract_common_factors({{"only", {}}}, 0.1), input_error);
}

TEST_CASE("fit rejects designs with more coefficients than rows") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Random(4, 4);
    Eigen::VectorXd y(4);
    y << 1, 0, 1, 0;
    CHECK_THROWS_AS(fit_logistic(make_design(X, y)), input_error);
}

TEST_CASE("deviance is non-increasing across a typical fit") {
    // indirectly: the optimizer must converge with a finite iteration count
    const LogisticFit fit = fit_logistic(frozen_design());
    CHECK(fit.converged);
    CHECK(fit.iterations <= 100);
    CHECK(fit.mcfadden_r2 >= 0.0);
    CHECK(fit.mcfadden_r2 < 1.0);
}
