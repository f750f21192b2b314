#include "trendmine/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "trendmine/csv.hpp"
#include "trendmine/stats.hpp"

namespace trendmine::inference {

namespace {

constexpr double kSeparationBetaBound = 15.0;

double sigmoid(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double log1p_exp(double eta) {
    if (eta > 0.0) return eta + std::log1p(std::exp(-eta));
    return std::log1p(std::exp(eta));
}

double log_likelihood(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i)
        ll += y[i] * eta[i] - log1p_exp(eta[i]);
    return ll;
}

std::string format_value(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", value);
    return buf;
}

struct NewtonResult {
    Eigen::VectorXd beta;
    double log_lik = 0.0;
    int iterations = 0;
    bool converged = false;
    Eigen::MatrixXd information;  // at the solution (penalty included if any)
};

// Newton/IRLS ascent on the (optionally ridge-penalized) log-likelihood with
// step-halving; the intercept is column 0 and is never penalized.
NewtonResult newton_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        int max_iter, double tol, double ridge,
                        const std::vector<std::string>& columns) {
    const Eigen::Index p = X.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd penalty_mask = Eigen::VectorXd::Ones(p);
    penalty_mask[0] = 0.0;

    auto objective = [&](const Eigen::VectorXd& b) {
        const double ll = log_likelihood(X * b, y);
        if (ridge <= 0.0) return ll;
        return ll - 0.5 * ridge * (penalty_mask.array() * b.array().square()).sum();
    };

    NewtonResult result;
    double obj = objective(beta);
    Eigen::MatrixXd information(p, p);

    for (int iter = 0; iter < max_iter; ++iter) {
        result.iterations = iter + 1;
        const Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd prob(eta.size());
        Eigen::VectorXd w(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            prob[i] = sigmoid(eta[i]);
            w[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-12);
        }
        Eigen::VectorXd grad = X.transpose() * (y - prob);
        information = X.transpose() * w.asDiagonal() * X;
        if (ridge > 0.0) {
            grad -= ridge * (penalty_mask.array() * beta.array()).matrix();
            information += ridge * penalty_mask.asDiagonal().toDenseMatrix();
        }

        if (grad.lpNorm<Eigen::Infinity>() < 1e-10) {
            result.converged = true;
            break;
        }

        if (ridge <= 0.0) {
            std::vector<std::string> runaway;
            for (Eigen::Index j = 1; j < p; ++j)
                if (std::fabs(beta[j]) > kSeparationBetaBound)
                    runaway.push_back(columns[static_cast<size_t>(j - 1)]);
            if (!runaway.empty()) {
                std::string names;
                for (const std::string& id : runaway)
                    names += (names.empty() ? "" : ", ") + id;
                throw numeric_error(
                    "separation detected: coefficient diverging for column(s) " + names);
            }
        }

        Eigen::LDLT<Eigen::MatrixXd> solver(information);
        if (solver.info() != Eigen::Success)
            throw numeric_error("singular information matrix in logistic fit");
        const Eigen::VectorXd direction = solver.solve(grad);
        if (!direction.allFinite())
            throw numeric_error("singular information matrix in logistic fit");

        double step = 1.0;
        double next_obj = objective(beta + step * direction);
        int halvings = 0;
        while (next_obj < obj - 1e-12 && halvings < 40) {
            step *= 0.5;
            next_obj = objective(beta + step * direction);
            ++halvings;
        }
        if (halvings == 40) {
            // No ascent possible: either converged or the MLE is at infinity.
            if (grad.lpNorm<Eigen::Infinity>() < 1e-6) {
                result.converged = true;
                break;
            }
            throw numeric_error(
                "separation detected: deviance cannot improve yet gradient is large");
        }

        const double improvement = next_obj - obj;
        beta += step * direction;
        obj = next_obj;
        if (std::fabs(improvement) < tol &&
            grad.lpNorm<Eigen::Infinity>() < 1e-6) {
            result.converged = true;
            break;
        }
    }

    // Recompute information at the solution for standard errors.
    {
        const Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd w(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double prob = sigmoid(eta[i]);
            w[i] = std::max(prob * (1.0 - prob), 1e-12);
        }
        information = X.transpose() * w.asDiagonal() * X;
        if (ridge > 0.0)
            information += ridge * penalty_mask.asDiagonal().toDenseMatrix();
        const Eigen::VectorXd grad_final =
            X.transpose() * (y - (X * beta).unaryExpr([](double e) { return sigmoid(e); })) -
            (ridge > 0.0
                 ? (ridge * (penalty_mask.array() * beta.array())).matrix().eval()
                 : Eigen::VectorXd::Zero(p).eval());
        result.converged = result.converged && grad_final.norm() < 1e-6;
    }
    result.beta = beta;
    result.log_lik = log_likelihood(X * beta, y);
    result.information = information;
    return result;
}

}  // namespace

std::string to_string(RemovalEntry::Reason reason) {
    switch (reason) {
        case RemovalEntry::Reason::zero_variance: return "zero_variance";
        case RemovalEntry::Reason::collinear: return "collinear";
        case RemovalEntry::Reason::vif: return "vif";
    }
    return {};
}

DesignMatrix build_design(const ScorePanel& panel, const TestKey& baseline_test,
                          const clustering::Clustering& clustering,
                          const ArchetypeLabel& positive_label,
                          const ArchetypeLabel& negative_label) {
    if (positive_label == negative_label)
        throw input_error("positive and negative labels must differ");

    const size_t test_idx = panel.test_index(baseline_test.id);

    std::set<int> positive_clusters, negative_clusters;
    for (const auto& [cluster, label] : clustering.labels) {
        if (label == positive_label) positive_clusters.insert(cluster);
        if (label == negative_label) negative_clusters.insert(cluster);
    }
    if (positive_clusters.empty())
        throw input_error("no cluster labeled " + to_string(positive_label));
    if (negative_clusters.empty())
        throw input_error("no cluster labeled " + to_string(negative_label));

    std::vector<std::string> rows;
    std::vector<double> target;
    for (const std::string& student : panel.students) {
        const auto it = clustering.assignment.find(student);
        if (it == clustering.assignment.end()) continue;
        if (positive_clusters.count(it->second)) {
            rows.push_back(student);
            target.push_back(1.0);
        } else if (negative_clusters.count(it->second)) {
            rows.push_back(student);
            target.push_back(0.0);
        }
    }
    const auto positives = static_cast<size_t>(
        std::count(target.begin(), target.end(), 1.0));
    if (positives < 2)
        throw input_error("cluster " + to_string(positive_label) +
                          " has fewer than 2 students in the panel");
    if (rows.size() - positives < 2)
        throw input_error("cluster " + to_string(negative_label) +
                          " has fewer than 2 students in the panel");

    DesignMatrix design;
    design.row_students = rows;
    design.positive_label = positive_label;
    design.negative_label = negative_label;
    design.baseline_test_id = baseline_test.id;
    design.target = Eigen::Map<const Eigen::VectorXd>(target.data(),
                                                      static_cast<Eigen::Index>(target.size()));

    const std::vector<ItemRecord>& sample_items =
        panel.item_scores[panel.student_index(rows[0])][test_idx];
    if (sample_items.empty())
        throw input_error("baseline test '" + baseline_test.id + "' has no items");
    for (const ItemRecord& item : sample_items) design.columns.push_back(item.item_id);

    design.predictors.resize(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(design.columns.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& records = panel.item_scores[panel.student_index(rows[r])][test_idx];
        for (size_t c = 0; c < records.size(); ++c)
            design.predictors(static_cast<Eigen::Index>(r),
                              static_cast<Eigen::Index>(c)) = records[c].score;
    }
    return design;
}

namespace {

void drop_column(DesignMatrix& design, size_t col, RemovalEntry entry) {
    const Eigen::Index n = design.predictors.rows();
    const Eigen::Index p = design.predictors.cols();
    Eigen::MatrixXd next(n, p - 1);
    Eigen::Index c = 0;
    for (Eigen::Index j = 0; j < p; ++j)
        if (j != static_cast<Eigen::Index>(col)) next.col(c++) = design.predictors.col(j);
    design.predictors = std::move(next);
    design.columns.erase(design.columns.begin() + static_cast<ptrdiff_t>(col));
    design.removal_log.push_back(std::move(entry));
}

}  // namespace

DesignMatrix reduce_variables(DesignMatrix design, double vif_threshold) {
    // Zero-variance columns.
    for (size_t j = 0; j < design.columns.size();) {
        const Eigen::VectorXd col = design.predictors.col(static_cast<Eigen::Index>(j));
        const double mean = col.mean();
        if ((col.array() - mean).abs().maxCoeff() == 0.0) {
            drop_column(design, j,
                        {design.columns[j], RemovalEntry::Reason::zero_variance, mean});
        } else {
            ++j;
        }
    }

    // Exactly collinear pairs; the earlier column survives.
    for (size_t i = 0; i < design.columns.size(); ++i) {
        for (size_t j = i + 1; j < design.columns.size();) {
            const Eigen::VectorXd a = design.predictors.col(static_cast<Eigen::Index>(i));
            const Eigen::VectorXd b = design.predictors.col(static_cast<Eigen::Index>(j));
            const Eigen::VectorXd da = a.array() - a.mean();
            const Eigen::VectorXd db = b.array() - b.mean();
            const double denom = da.norm() * db.norm();
            const double r = denom > 0.0 ? da.dot(db) / denom : 0.0;
            if (std::fabs(r) >= 1.0 - 1e-12) {
                drop_column(design, j,
                            {design.columns[j], RemovalEntry::Reason::collinear,
                             std::fabs(r)});
            } else {
                ++j;
            }
        }
    }

    // Stepwise VIF elimination; ties drop the later column.
    while (design.columns.size() >= 2) {
        const std::vector<double> vifs = stats::vif(design.predictors);
        size_t worst = 0;
        for (size_t j = 1; j < vifs.size(); ++j)
            if (vifs[j] >= vifs[worst]) worst = j;
        if (!(vifs[worst] > vif_threshold)) break;
        drop_column(design, worst,
                    {design.columns[worst], RemovalEntry::Reason::vif, vifs[worst]});
    }

    if (design.columns.empty())
        throw input_error("variable reduction removed every predictor");
    return design;
}

LogisticFit fit_logistic(const DesignMatrix& design, int max_iter, double tol,
                         bool ridge_fallback, double ridge_penalty) {
    const Eigen::Index n = design.predictors.rows();
    const Eigen::Index p = design.predictors.cols();
    if (n <= p + 1)
        throw input_error("logistic fit needs more rows than coefficients: n=" +
                          std::to_string(n) + ", p=" + std::to_string(p + 1));

    Eigen::MatrixXd X(n, p + 1);
    X.col(0).setOnes();
    X.rightCols(p) = design.predictors;

    LogisticFit fit;
    NewtonResult newton;
    try {
        newton = newton_fit(X, design.target, max_iter, tol, 0.0, design.columns);
    } catch (const numeric_error&) {
        if (!ridge_fallback) throw;
        newton = newton_fit(X, design.target, std::max(max_iter, 200), tol,
                            ridge_penalty, design.columns);
        fit.ridge_used = true;
    }

    fit.converged = newton.converged;
    fit.iterations = newton.iterations;
    fit.log_lik = newton.log_lik;

    Eigen::LDLT<Eigen::MatrixXd> solver(newton.information);
    const Eigen::MatrixXd cov =
        solver.solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
    if (!cov.allFinite())
        throw numeric_error("singular information matrix in logistic fit");

    auto stat_at = [&](Eigen::Index j) {
        CoefStat s;
        s.beta = newton.beta[j];
        s.se = std::sqrt(std::max(cov(j, j), 0.0));
        s.p = s.se > 0.0 ? stats::normal_two_sided_p(s.beta / s.se) : 1.0;
        return s;
    };
    fit.intercept = stat_at(0);
    for (Eigen::Index j = 0; j < p; ++j)
        fit.coef[design.columns[static_cast<size_t>(j)]] = stat_at(j + 1);

    // Intercept-only reference: closed-form Bernoulli MLE.
    const double ybar = design.target.mean();
    fit.null_log_lik = static_cast<double>(n) *
                       (ybar * std::log(ybar) + (1.0 - ybar) * std::log1p(-ybar));
    if (p == 0) {
        fit.mcfadden_r2 = 0.0;
        fit.lr_test_p = 1.0;
    } else {
        fit.mcfadden_r2 = std::max(0.0, 1.0 - fit.log_lik / fit.null_log_lik);
        const double lr = std::max(0.0, 2.0 * (fit.log_lik - fit.null_log_lik));
        fit.lr_test_p = stats::chi_squared_upper_p(lr, static_cast<int>(p));
    }
    return fit;
}

std::vector<TierEntry> significance_tiers(const LogisticFit& fit,
                                          const Manifest& manifest,
                                          const DesignMatrix& design) {
    if (!fit.converged)
        throw numeric_error("significance tiers require a converged fit");
    const ManifestEntry& entry = manifest.at(design.baseline_test_id);
    auto topic_of = [&](const std::string& item_id) -> const std::string& {
        for (const auto& [id, topic] : entry.items)
            if (id == item_id) return topic;
        throw input_error("item '" + item_id + "' missing from manifest for test '" +
                          design.baseline_test_id + "'");
    };

    std::vector<TierEntry> tiers;
    tiers.reserve(design.columns.size());
    for (const std::string& item_id : design.columns) {
        const CoefStat& stat = fit.coef.at(item_id);
        TierEntry tier;
        tier.item_id = item_id;
        tier.topic = topic_of(item_id);
        tier.coef = stat.beta;
        tier.se = stat.se;
        tier.p = stat.p;
        if (stat.p < 0.01)
            tier.tier = "**";
        else if (stat.p < 0.05)
            tier.tier = "*";
        else if (stat.p < 0.10)
            tier.tier = "†";
        tiers.push_back(std::move(tier));
    }
    return tiers;
}

FactorReport extract_common_factors(
    const std::vector<std::pair<std::string, std::vector<TierEntry>>>& per_cohort,
    double alpha) {
    if (per_cohort.size() < 2)
        throw input_error("common-factor extraction needs at least 2 cohorts");

    FactorReport report;
    report.alpha = alpha;
    report.per_cohort = per_cohort;

    // Topics significant in the first cohort, kept in first-seen order.
    std::vector<std::string> candidates;
    for (const TierEntry& entry : per_cohort[0].second)
        if (entry.p < alpha &&
            std::find(candidates.begin(), candidates.end(), entry.topic) ==
                candidates.end())
            candidates.push_back(entry.topic);

    for (const std::string& topic : candidates) {
        CommonFactor factor;
        factor.topic = topic;
        bool everywhere = true;
        for (const auto& [cohort, tiers] : per_cohort) {
            std::vector<std::pair<std::string, double>> hits;
            for (const TierEntry& entry : tiers)
                if (entry.topic == topic && entry.p < alpha)
                    hits.emplace_back(entry.item_id, entry.coef);
            if (hits.empty()) {
                everywhere = false;
                break;
            }
            factor.per_cohort[cohort] = std::move(hits);
        }
        if (everywhere) report.common_factors.push_back(std::move(factor));
    }
    return report;
}

std::string regression_csv(const std::vector<TierEntry>& tiers,
                           const LogisticFit& fit) {
    std::string out = "item_id,topic,coef,se,p,tier\n";
    for (const TierEntry& entry : tiers)
        out += csv::join_row({entry.item_id, entry.topic, format_value(entry.coef),
                              format_value(entry.se), format_value(entry.p),
                              entry.tier});
    out += csv::join_row({"(intercept)", "", format_value(fit.intercept.beta),
                          format_value(fit.intercept.se), format_value(fit.intercept.p),
                          ""});
    return out;
}

}  // namespace trendmine::inference
