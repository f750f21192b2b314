#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trendmine/clustering.hpp"
#include "trendmine/data_model.hpp"

namespace trendmine::inference {

struct RemovalEntry {
    enum class Reason { zero_variance, collinear, vif };
    std::string item_id;
    Reason reason = Reason::zero_variance;
    double detail = 0.0;  // VIF value, |r| for collinear, constant for zero variance
};

std::string to_string(RemovalEntry::Reason reason);

// Two-cluster contrast design: binary target (1 = positive cluster), one
// binary predictor column per baseline-test item.
struct DesignMatrix {
    std::vector<std::string> row_students;
    Eigen::VectorXd target;
    std::vector<std::string> columns;  // item ids, baseline manifest order
    Eigen::MatrixXd predictors;        // rows x columns, no intercept
    std::vector<RemovalEntry> removal_log;
    ArchetypeLabel positive_label;
    ArchetypeLabel negative_label;
    std::string baseline_test_id;
};

struct CoefStat {
    double beta = 0.0;
    double se = 0.0;
    double p = 1.0;
};

struct LogisticFit {
    std::map<std::string, CoefStat> coef;  // per surviving item
    CoefStat intercept;
    double log_lik = 0.0;
    double null_log_lik = 0.0;
    double mcfadden_r2 = 0.0;
    double lr_test_p = 1.0;
    bool converged = false;
    int iterations = 0;
    bool ridge_used = false;
};

struct TierEntry {
    std::string item_id;
    std::string topic;
    double coef = 0.0;
    double se = 0.0;
    double p = 1.0;
    std::string tier;  // "**", "*", "†" (p<.10), or ""
};

struct CommonFactor {
    std::string topic;
    // cohort -> significant (item_id, coef) pairs carrying this topic
    std::map<std::string, std::vector<std::pair<std::string, double>>> per_cohort;
};

struct FactorReport {
    double alpha = 0.10;
    std::vector<std::pair<std::string, std::vector<TierEntry>>> per_cohort;
    std::vector<CommonFactor> common_factors;
};

DesignMatrix build_design(const ScorePanel& panel, const TestKey& baseline_test,
                          const clustering::Clustering& clustering,
                          const ArchetypeLabel& positive_label,
                          const ArchetypeLabel& negative_label);

// Zero-variance columns first, then exactly collinear pairs (keeping the
// earlier column), then stepwise removal of the largest VIF above the
// threshold until all survivors pass.
DesignMatrix reduce_variables(DesignMatrix design, double vif_threshold = 10.0);

// Maximum-likelihood logit fit by Newton/IRLS with step-halving; standard
// errors from the inverse observed information. Separation raises
// numeric_error unless ridge_fallback draws a weakly penalized fit instead.
LogisticFit fit_logistic(const DesignMatrix& design, int max_iter = 100,
                         double tol = 1e-8, bool ridge_fallback = false,
                         double ridge_penalty = 1e-4);

// Annotates every surviving item with its significance tier: ** p<.01,
// * p<.05, dagger p<.10 (strict), blank otherwise.
std::vector<TierEntry> significance_tiers(const LogisticFit& fit,
                                          const Manifest& manifest,
                                          const DesignMatrix& design);

// Topics significant (p < alpha) in every cohort, matched by exact topic
// string; item ids may differ across cohorts.
FactorReport extract_common_factors(
    const std::vector<std::pair<std::string, std::vector<TierEntry>>>& per_cohort,
    double alpha = 0.10);

std::string regression_csv(const std::vector<TierEntry>& tiers,
                           const LogisticFit& fit);

}  // namespace trendmine::inference
