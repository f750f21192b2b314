#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trendmine/errors.hpp"

namespace trendmine::stats {

struct CorrResult {
    double r = 0.0;
    int n = 0;
    double p_two_sided = 1.0;
};

// Cohort-normalized scores: mean 50, population SD 10.
struct DeviationScoreSet {
    std::map<std::string, double> scores;
    double mu = 0.0;
    double sigma = 0.0;
    bool degenerate_fallback = false;  // sigma was 0 and all T were set to 50
};

// Pearson's r from population moments; two-sided p from the t statistic
// r*sqrt(n-2)/sqrt(1-r^2) with n-2 degrees of freedom.
CorrResult pearson(std::span<const double> x, std::span<const double> y);

// Pearson applied to average ranks.
CorrResult spearman(std::span<const double> x, std::span<const double> y);

// Average ranks, 1-based; ties share the mean of their rank range.
std::vector<double> average_ranks(std::span<const double> values);

// T_i = 10 (x_i - mu) / sigma + 50 with population mu, sigma. When sigma is
// zero: error by default, or all-50 with the fallback enabled.
DeviationScoreSet deviation_scores(const std::map<std::string, double>& raw,
                                   bool sigma_zero_fallback = false);

// VIF_j = 1 / (1 - R^2_j) from regressing column j on the remaining columns
// plus an intercept. Perfectly collinear columns report +infinity.
std::vector<double> vif(const Eigen::MatrixXd& design);

// Tail probabilities used for significance reporting.
double student_t_two_sided_p(double t, int df);
double chi_squared_upper_p(double x, int df);
double normal_two_sided_p(double z);

// Regularized incomplete beta/gamma kernels (exposed for testing).
double regularized_incomplete_beta(double a, double b, double x);
double regularized_gamma_q(double a, double x);

}  // namespace trendmine::stats
