#pragma once

// Shared fixtures for the screening and labeling suites: published
// correlation matrices from two real cohorts' national-language and
// mathematics chains, the five-test intro example, and cluster centroid
// level profiles with their expected archetype names.

#include <string>
#include <vector>

#include "trendmine/data_model.hpp"
#include "trendmine/screening.hpp"

namespace fixtures {

struct CorrFixture {
    std::vector<std::string> tests;  // chronological ids
    // upper triangle by (row, col), row-major
    std::vector<double> upper;
    std::vector<std::string> expected_retained;
    std::vector<std::string> expected_excluded;
};

inline trendmine::screening::TestCorrelationMatrix to_matrix(const CorrFixture& fixture) {
    trendmine::screening::TestCorrelationMatrix matrix;
    const size_t m = fixture.tests.size();
    for (size_t i = 0; i < m; ++i) {
        trendmine::TestKey key;
        key.id = fixture.tests[i];
        key.organization = "fixture";
        key.subject = trendmine::Subject::mathematics();
        key.grade = 4 + std::min<int>(static_cast<int>(i), 5);
        key.year = 2014 + static_cast<int>(i);
        key.order_index = static_cast<int>(i);
        matrix.tests.push_back(key);
    }
    matrix.r.assign(m, std::vector<trendmine::stats::CorrResult>(m));
    size_t idx = 0;
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = i + 1; j < m; ++j) {
            trendmine::stats::CorrResult corr;
            corr.r = fixture.upper[idx++];
            corr.n = 170;
            corr.p_two_sided = 0.001;
            matrix.r[i][j] = corr;
            matrix.r[j][i] = corr;
        }
    }
    return matrix;
}

// Five-test example: an incoherent third test with depressed adjacent
// correlations and an elevated skip correlation.
inline CorrFixture five_test_example() {
    return {{"test1", "test2", "test3", "test4", "test5"},
            {0.84, 0.23, 0.91, 0.88,
                   0.50, 0.92, 0.81,
                         0.23, 0.58,
                               0.83},
            {"test1", "test2", "test4", "test5"},
            {"test3"}};
}

// Cohort 1, national language: chain A4, A5, B6A, B6B, A7, A8.
inline CorrFixture lang_cohort1() {
    return {{"a4nl", "a5nl", "b6nlA", "b6nlB", "a7nl", "a8nl"},
            {0.81, 0.57, 0.55, 0.71, 0.72,
                   0.58, 0.58, 0.82, 0.75,
                         0.61, 0.62, 0.56,
                               0.60, 0.58,
                                     0.76},
            {"a4nl", "a5nl", "a7nl", "a8nl"},
            {"b6nlA", "b6nlB"}};
}

// Cohort 1, mathematics.
inline CorrFixture math_cohort1() {
    return {{"a4m", "a5m", "b6mA", "b6mB", "a7m", "a8m"},
            {0.82, 0.67, 0.58, 0.77, 0.67,
                   0.69, 0.61, 0.85, 0.68,
                         0.68, 0.69, 0.54,
                               0.59, 0.54,
                                     0.72},
            {"a4m", "a5m", "a7m", "a8m"},
            {"b6mA", "b6mB"}};
}

// Cohort 2, national language: chain A5, B6A, B6B, A7, A8, B9A, B9B.
inline CorrFixture lang_cohort2() {
    return {{"a5nl", "b6nlA", "b6nlB", "a7nl", "a8nl", "b9nlA", "b9nlB"},
            {0.50, 0.46, 0.70, 0.75, 0.69, 0.57,
                   0.68, 0.40, 0.42, 0.37, 0.38,
                         0.37, 0.38, 0.38, 0.36,
                               0.72, 0.68, 0.53,
                                     0.70, 0.62,
                                           0.60},
            {"a5nl", "a7nl", "a8nl", "b9nlA"},
            {"b6nlA", "b6nlB", "b9nlB"}};
}

// Cohort 2, mathematics.
inline CorrFixture math_cohort2() {
    return {{"a5m", "b6mA", "b6mB", "a7m", "a8m", "b9mA", "b9mB"},
            {0.54, 0.51, 0.79, 0.72, 0.71, 0.38,
                   0.69, 0.50, 0.44, 0.46, 0.40,
                         0.43, 0.42, 0.37, 0.41,
                               0.78, 0.80, 0.74,
                                     0.85, 0.77,
                                           0.82},
            {"a5m", "a7m", "a8m", "b9mA", "b9mB"},
            {"b6mA", "b6mB"}};
}

inline std::vector<CorrFixture> cohort_fixtures() {
    return {lang_cohort1(), math_cohort1(), lang_cohort2(), math_cohort2()};
}

// Published centroid level profiles (three-test chains) and the archetype
// each was named, cohort 1 then cohort 2.
struct LabelFixture {
    std::vector<double> levels;
    const char* expected;
};

inline std::vector<LabelFixture> labeling_fixtures() {
    return {
        {{57.93, 58.86, 60.33}, "stay_high_stably"},
        {{44.41, 46.34, 52.70}, "increase_from_low"},
        {{52.34, 51.66, 45.97}, "decrease_from_high"},
        {{32.80, 35.15, 38.39}, "stay_low_stably"},
        {{55.98, 57.59, 59.72}, "stay_high_stably"},
        {{41.21, 47.58, 51.27}, "increase_from_low"},
        {{52.03, 49.57, 46.70}, "decrease_from_high"},
        {{35.69, 34.92, 38.82}, "stay_low_stably"},
    };
}

}  // namespace fixtures
