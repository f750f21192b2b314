#pragma once

#include <string>
#include <vector>

#include "trendmine/data_model.hpp"
#include "trendmine/stats.hpp"

namespace trendmine::screening {

// Pairwise correlations over a cohort's chronological test chain.
struct TestCorrelationMatrix {
    std::vector<TestKey> tests;  // chronological
    std::vector<std::vector<stats::CorrResult>> r;  // symmetric, diagonal unused

    const stats::CorrResult& at(size_t i, size_t j) const { return r[i][j]; }
};

struct ScreeningPolicy {
    double theta_low = 0.70;  // minimum acceptable consecutive r
    int min_chain = 3;
    ScoreKind score_kind = ScoreKind::correct_ratio;
};

struct Exclusion {
    TestKey test;
    std::string reason;
    std::vector<double> offending_r;  // consecutive r values at removal time
};

struct ScreeningOutcome {
    std::vector<TestKey> retained;  // chronological
    std::vector<Exclusion> excluded;  // in removal order
    std::vector<double> final_consecutive_r;
};

TestCorrelationMatrix correlation_matrix(const ScorePanel& panel,
                                         const ScreeningPolicy& policy);

// Greedy exclusion: while some consecutive retained pair falls below
// theta_low, remove the test whose removal leaves the most coherent chain
// (maximal minimum consecutive r; ties by maximal mean, then drop the later
// test). Errors out when the chain would shrink below min_chain.
ScreeningOutcome screen_tests(const TestCorrelationMatrix& matrix,
                              const ScreeningPolicy& policy);

// Re-asserts the retained-chain invariant against the matrix and returns a
// human-readable audit of the exclusions. Throws on violation.
std::string validate_chain(const ScreeningOutcome& outcome,
                           const TestCorrelationMatrix& matrix,
                           const ScreeningPolicy& policy);

std::string screening_report_json(const ScreeningOutcome& outcome,
                                  const TestCorrelationMatrix& matrix,
                                  const ScreeningPolicy& policy);

// Square r matrix with test-id headers, then a blank line, then the matching
// p matrix; both to 4 decimals.
std::string correlations_csv(const TestCorrelationMatrix& matrix);

}  // namespace trendmine::screening
