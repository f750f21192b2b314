#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "trendmine/rng.hpp"
#include "trendmine/stats.hpp"

using namespace trendmine;
using namespace trendmine::stats;

TEST_CASE("pearson on exact linear relations") {
    const std::vector<double> x = {1, 2, 3};
    CHECK(pearson(x, std::vector<double>{2, 4, 6}).r == doctest::Approx(1.0));
    CHECK(pearson(x, std::vector<double>{3, 2, 1}).r == doctest::Approx(-1.0));
    CHECK(pearson(x, std::vector<double>{2, 4, 6}).p_two_sided == doctest::Approx(0.0));
}

TEST_CASE("pearson worked example r=0.8") {
    const std::vector<double> x = {1, 2, 3, 4};
    const std::vector<double> y = {1, 3, 2, 4};
    const CorrResult result = pearson(x, y);
    CHECK(result.r == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(result.n == 4);
    // t = 0.8*sqrt(2)/0.6 with 2 df (reference value from scipy)
    CHECK(result.p_two_sided == doctest::Approx(0.2).epsilon(1e-10));
}

TEST_CASE("pearson rejects degenerate input") {
    const std::vector<double> x = {1, 2, 3};
    CHECK_THROWS_AS(pearson(x, std::vector<double>{5, 5, 5}), numeric_error);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), input_error);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}),
                    input_error);
}

TEST_CASE("pearson symmetry and affine invariance") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x, y;
        for (int i = 0; i < 12; ++i) {
            x.push_back(rng.normal());
            y.push_back(rng.normal());
        }
        const CorrResult xy = pearson(x, y);
        const CorrResult yx = pearson(y, x);
        CHECK(xy.r == yx.r);

        std::vector<double> scaled = x;
        for (double& v : scaled) v = 3.5 * v + 11.0;
        CHECK(pearson(scaled, y).r == doctest::Approx(xy.r).epsilon(1e-12));
    }
}

TEST_CASE("spearman equals pearson on ranks") {
    const std::vector<double> x = {10, 20, 30};
    const std::vector<double> y = {1, 5, 2};
    CHECK(spearman(x, y).r == doctest::Approx(0.5).epsilon(1e-12));

    // strictly monotone map has rank correlation 1
    const std::vector<double> xs = {0.5, 1.5, 7.0, 9.0};
    std::vector<double> cubes = xs;
    for (double& v : cubes) v = v * v * v;
    CHECK(spearman(xs, cubes).r == doctest::Approx(1.0));

    // average ranks on ties
    CHECK(spearman(std::vector<double>{1, 1, 2}, std::vector<double>{3, 3, 4}).r ==
          doctest::Approx(1.0));
}

TEST_CASE("spearman agrees with an independent rank implementation") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> x, y;
        for (int i = 0; i < 15; ++i) {
            // coarse grid forces ties
            x.push_back(std::floor(rng.uniform01() * 6.0));
            y.push_back(std::floor(rng.uniform01() * 6.0));
        }
        // independent O(n^2) average-rank computation
        auto brute_ranks = [](const std::vector<double>& v) {
            std::vector<double> out(v.size());
            for (size_t i = 0; i < v.size(); ++i) {
                double below = 0, equal = 0;
                for (double w : v) {
                    if (w < v[i]) ++below;
                    if (w == v[i]) ++equal;
                }
                out[i] = below + (equal + 1.0) / 2.0;
            }
            return out;
        };
        const std::vector<double> rx = brute_ranks(x);
        const std::vector<double> ry = brute_ranks(y);
        auto constant = [](const std::vector<double>& v) {
            for (double w : v)
                if (w != v[0]) return false;
            return true;
        };
        if (constant(rx) || constant(ry)) continue;
        const CorrResult via_module = spearman(x, y);
        const CorrResult via_brute = pearson(rx, ry);
        CHECK(via_module.r == doctest::Approx(via_brute.r).epsilon(1e-14));
    }
}

TEST_CASE("deviation scores reproduce the worked example") {
    const std::map<std::string, double> raw = {{"a", 40.0}, {"b", 50.0}, {"c", 60.0}};
    const DeviationScoreSet dev = deviation_scores(raw);
    CHECK(dev.mu == doctest::Approx(50.0));
    CHECK(dev.sigma == doctest::Approx(8.16496580927726).epsilon(1e-12));
    CHECK(dev.scores.at("c") == doctest::Approx(62.24744871391589).epsilon(1e-12));
    CHECK(dev.scores.at("b") == doctest::Approx(50.0));
}

TEST_CASE("deviation scores normalize to mean 50 sd 10") {
    Rng rng(1234);
    for (int trial = 0; trial < 50; ++trial) {
        std::map<std::string, double> raw;
        const int n = 10 + static_cast<int>(rng.uniform_index(490));
        for (int i = 0; i < n; ++i)
            raw["s" + std::to_string(i)] = rng.normal(60.0, 17.0);
        const DeviationScoreSet dev = deviation_scores(raw);
        double mean = 0.0;
        for (const auto& [id, t] : dev.scores) mean += t;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto& [id, t] : dev.scores) ss += (t - mean) * (t - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        CHECK(mean == doctest::Approx(50.0).epsilon(1e-9));
        CHECK(sd == doctest::Approx(10.0).epsilon(1e-9));
    }
}

TEST_CASE("deviation scores degenerate cohort") {
    const std::map<std::string, double> flat = {{"a", 5.0}, {"b", 5.0}};
    CHECK_THROWS_AS(deviation_scores(flat), numeric_error);
    const DeviationScoreSet fallback = deviation_scores(flat, true);
    CHECK(fallback.degenerate_fallback);
    CHECK(fallback.scores.at("a") == 50.0);
    CHECK_THROWS_AS(deviation_scores({{"only", 1.0}}), input_error);
}

TEST_CASE("vif on orthogonal and collinear designs") {
    Eigen::MatrixXd orth(4, 2);
    orth << 1, 1, 1, -1, -1, 1, -1, -1;
    const std::vector<double> v = vif(orth);
    CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(v[1] == doctest::Approx(1.0).epsilon(1e-9));

    Eigen::MatrixXd dup(5, 2);
    dup << 1, 1, 2, 2, 3, 3, 5, 5, 9, 9;
    const std::vector<double> dv = vif(dup);
    CHECK(std::isinf(dv[0]));
    CHECK(std::isinf(dv[1]));

    CHECK_THROWS_AS(vif(Eigen::MatrixXd::Random(5, 1)), input_error);
}

TEST_CASE("vif matches the auxiliary-regression definition on planted R^2") {
    // x2 = x1 + noise scaled for R^2 ~= 0.96, so VIF(x2) ~= 25
    Rng rng(42);
    const int n = 400;
    Eigen::MatrixXd design(n, 3);
    for (int i = 0; i < n; ++i) {
        design(i, 0) = rng.normal();
        design(i, 2) = rng.normal();
    }
    const double noise_sd = std::sqrt((1.0 - 0.96) / 0.96);
    for (int i = 0; i < n; ++i) design(i, 1) = design(i, 0) + noise_sd * rng.normal();

    const std::vector<double> v = vif(design);
    CHECK(v[1] == doctest::Approx(25.0).epsilon(0.25));  // sampling noise
    CHECK(v[2] == doctest::Approx(1.0).epsilon(0.05));

    // independent oracle: diagonal of the inverse predictor correlation matrix
    Eigen::MatrixXd centered = design;
    for (int j = 0; j < 3; ++j) {
        const double mean = design.col(j).mean();
        centered.col(j).array() -= mean;
        centered.col(j) /= centered.col(j).norm();
    }
    const Eigen::MatrixXd corr = centered.transpose() * centered;
    const Eigen::MatrixXd inv = corr.inverse();
    for (int j = 0; j < 3; ++j)
        CHECK(v[static_cast<size_t>(j)] ==
              doctest::Approx(inv(j, j)).epsilon(1e-8));
}

TEST_CASE("tail probability kernels match frozen references") {
    // scipy-computed values
    CHECK(student_t_two_sided_p(1.0, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(student_t_two_sided_p(2.5, 3) ==
          doctest::Approx(0.08770664700806555).epsilon(1e-12));
    CHECK(student_t_two_sided_p(0.5, 10) ==
          doctest::Approx(0.6278936057429729).epsilon(1e-12));
    CHECK(student_t_two_sided_p(3.0, 28) ==
          doctest::Approx(0.0056173990797091095).epsilon(1e-12));
    CHECK(student_t_two_sided_p(10.0, 5) ==
          doctest::Approx(0.00017094757574296357).epsilon(1e-12));

    CHECK(chi_squared_upper_p(1.0, 1) ==
          doctest::Approx(0.31731050786291115).epsilon(1e-12));
    CHECK(chi_squared_upper_p(5.0, 2) ==
          doctest::Approx(0.0820849986238988).epsilon(1e-12));
    CHECK(chi_squared_upper_p(10.0, 4) ==
          doctest::Approx(0.04042768199451279).epsilon(1e-12));
    CHECK(chi_squared_upper_p(25.0, 19) ==
          doctest::Approx(0.16054222136106835).epsilon(1e-12));
    CHECK(chi_squared_upper_p(0.5, 3) ==
          doctest::Approx(0.9188914116546758).epsilon(1e-12));

    CHECK(normal_two_sided_p(0.5) == doctest::Approx(0.6170750774519738).epsilon(1e-12));
    CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(normal_two_sided_p(3.0) ==
          doctest::Approx(0.0026997960632601866).epsilon(1e-12));
}

TEST_CASE("correlation p-value behaves monotonically in |r|") {
    const int n = 30;
    auto p_of = [&](double r) {
        const double t = r * std::sqrt(n - 2.0) / std::sqrt(1.0 - r * r);
        return student_t_two_sided_p(t, n - 2);
    };
    CHECK(p_of(0.0) == doctest::Approx(1.0));
    double previous = 1.1;
    for (double r = 0.0; r < 0.999; r += 0.01) {
        const double p = p_of(r);
        CHECK(p <= previous + 1e-15);
        previous = p;
    }
    // frozen reference: r=0.92 at n=170 and r=0.23 at n=200
    const double t170 = 0.92 * std::sqrt(168.0) / std::sqrt(1.0 - 0.92 * 0.92);
    CHECK(student_t_two_sided_p(t170, 168) ==
          doctest::Approx(3.02866368150278e-70).epsilon(1e-6));
    const double t200 = 0.23 * std::sqrt(198.0) / std::sqrt(1.0 - 0.23 * 0.23);
    CHECK(student_t_two_sided_p(t200, 198) ==
          doctest::Approx(0.001051620981415829).epsilon(1e-9));
}
