#include "trendmine/screening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trendmine/csv.hpp"

namespace trendmine::screening {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_r(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    return buf;
}

std::vector<double> consecutive_r(const TestCorrelationMatrix& matrix,
                                  const std::vector<size_t>& chain) {
    std::vector<double> out;
    out.reserve(chain.size() - 1);
    for (size_t i = 0; i + 1 < chain.size(); ++i)
        out.push_back(matrix.at(chain[i], chain[i + 1]).r);
    return out;
}

double min_of(const std::vector<double>& v) {
    return *std::min_element(v.begin(), v.end());
}

double mean_of(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

}  // namespace

TestCorrelationMatrix correlation_matrix(const ScorePanel& panel,
                                         const ScreeningPolicy& policy) {
    if (panel.students.size() < 3)
        throw input_error("correlation matrix needs at least 3 students");

    const size_t m = panel.tests.size();
    TestCorrelationMatrix matrix;
    matrix.tests = panel.tests;
    matrix.r.assign(m, std::vector<stats::CorrResult>(m));

    std::vector<std::vector<double>> series(m);
    for (size_t t = 0; t < m; ++t) {
        series[t].reserve(panel.students.size());
        for (size_t s = 0; s < panel.students.size(); ++s)
            series[t].push_back(panel.aggregate_value(s, t, policy.score_kind));
    }

    for (size_t i = 0; i < m; ++i) {
        for (size_t j = i + 1; j < m; ++j) {
            stats::CorrResult corr;
            try {
                corr = stats::pearson(series[i], series[j]);
            } catch (const numeric_error&) {
                throw numeric_error("degenerate aggregate variance on test '" +
                                    panel.tests[i].id + "' or '" + panel.tests[j].id +
                                    "'");
            }
            matrix.r[i][j] = corr;
            matrix.r[j][i] = corr;
        }
    }
    return matrix;
}

ScreeningOutcome screen_tests(const TestCorrelationMatrix& matrix,
                              const ScreeningPolicy& policy) {
    const size_t m = matrix.tests.size();
    if (static_cast<int>(m) < policy.min_chain)
        throw input_error("screening needs at least " + std::to_string(policy.min_chain) +
                          " tests, got " + std::to_string(m));

    std::vector<size_t> chain(m);
    for (size_t i = 0; i < m; ++i) chain[i] = i;

    ScreeningOutcome outcome;
    while (true) {
        const std::vector<double> consec = consecutive_r(matrix, chain);
        if (min_of(consec) >= policy.theta_low) break;

        if (static_cast<int>(chain.size()) <= policy.min_chain) {
            std::ostringstream msg;
            msg << "screening failed: chain would shrink below min_chain="
                << policy.min_chain << "; removals so far:";
            for (const Exclusion& e : outcome.excluded) msg << " " << e.test.id;
            msg << "; remaining consecutive r:";
            for (double r : consec) msg << " " << format_r(r);
            throw numeric_error(msg.str());
        }

        // Candidate removal that best repairs the chain: maximal minimum
        // consecutive r, then maximal mean, then the later test.
        size_t best_idx = 0;
        double best_min = -2.0, best_mean = -2.0;
        for (size_t idx = 0; idx < chain.size(); ++idx) {
            std::vector<size_t> candidate;
            candidate.reserve(chain.size() - 1);
            for (size_t i = 0; i < chain.size(); ++i)
                if (i != idx) candidate.push_back(chain[i]);
            const std::vector<double> cc = consecutive_r(matrix, candidate);
            const double cmin = min_of(cc);
            const double cmean = mean_of(cc);
            if (cmin > best_min || (cmin == best_min && cmean > best_mean) ||
                (cmin == best_min && cmean == best_mean)) {
                best_min = cmin;
                best_mean = cmean;
                best_idx = idx;
            }
        }

        Exclusion exclusion;
        exclusion.test = matrix.tests[chain[best_idx]];
        if (best_idx > 0)
            exclusion.offending_r.push_back(
                matrix.at(chain[best_idx - 1], chain[best_idx]).r);
        if (best_idx + 1 < chain.size())
            exclusion.offending_r.push_back(
                matrix.at(chain[best_idx], chain[best_idx + 1]).r);
        std::ostringstream reason;
        reason << "consecutive coherence below " << format_r(policy.theta_low)
               << " (r with neighbors:";
        for (double r : exclusion.offending_r) reason << " " << format_r(r);
        reason << "); removal raises the chain minimum to " << format_r(best_min);
        exclusion.reason = reason.str();
        outcome.excluded.push_back(std::move(exclusion));
        chain.erase(chain.begin() + static_cast<ptrdiff_t>(best_idx));
    }

    for (size_t i : chain) outcome.retained.push_back(matrix.tests[i]);
    outcome.final_consecutive_r = consecutive_r(matrix, chain);
    return outcome;
}

std::string validate_chain(const ScreeningOutcome& outcome,
                           const TestCorrelationMatrix& matrix,
                           const ScreeningPolicy& policy) {
    auto index_of = [&](const TestKey& key) {
        for (size_t i = 0; i < matrix.tests.size(); ++i)
            if (matrix.tests[i].id == key.id) return i;
        throw validation_error("retained test '" + key.id + "' not in matrix");
    };

    if (outcome.retained.size() + outcome.excluded.size() != matrix.tests.size())
        throw validation_error("retained + excluded does not cover the input tests");

    std::ostringstream audit;
    audit << "retained chain:";
    for (const TestKey& key : outcome.retained) audit << " " << key.id;
    audit << "\n";

    int previous_order = std::numeric_limits<int>::min();
    for (const TestKey& key : outcome.retained) {
        if (key.order_index <= previous_order)
            throw validation_error("retained chain is not chronological at '" + key.id +
                                   "'");
        previous_order = key.order_index;
    }

    for (size_t i = 0; i + 1 < outcome.retained.size(); ++i) {
        const double r =
            matrix.at(index_of(outcome.retained[i]), index_of(outcome.retained[i + 1])).r;
        if (r < policy.theta_low)
            throw validation_error("consecutive r " + format_r(r) + " between '" +
                                   outcome.retained[i].id + "' and '" +
                                   outcome.retained[i + 1].id + "' violates theta_low " +
                                   format_r(policy.theta_low));
        audit << "  r(" << outcome.retained[i].id << ", " << outcome.retained[i + 1].id
              << ") = " << format_r(r) << "\n";
    }
    if (outcome.excluded.empty()) {
        audit << "no exclusions\n";
    } else {
        audit << "exclusions:\n";
        for (const Exclusion& e : outcome.excluded)
            audit << "  " << e.test.id << ": " << e.reason << "\n";
    }
    return audit.str();
}

std::string screening_report_json(const ScreeningOutcome& outcome,
                                  const TestCorrelationMatrix& matrix,
                                  const ScreeningPolicy& policy) {
    ordered_json report;
    report["policy"] = {{"theta_low", policy.theta_low},
                        {"min_chain", policy.min_chain},
                        {"score_kind", to_string(policy.score_kind)}};
    report["retained"] = ordered_json::array();
    for (const TestKey& key : outcome.retained) report["retained"].push_back(key.id);
    report["final_consecutive_r"] = outcome.final_consecutive_r;
    report["excluded"] = ordered_json::array();
    for (const Exclusion& e : outcome.excluded)
        report["excluded"].push_back({{"test", e.test.id},
                                      {"reason", e.reason},
                                      {"offending_r", e.offending_r}});
    ordered_json corr = ordered_json::array();
    for (size_t i = 0; i < matrix.tests.size(); ++i) {
        for (size_t j = i + 1; j < matrix.tests.size(); ++j) {
            corr.push_back({{"a", matrix.tests[i].id},
                            {"b", matrix.tests[j].id},
                            {"r", matrix.at(i, j).r},
                            {"p", matrix.at(i, j).p_two_sided}});
        }
    }
    report["correlations"] = std::move(corr);
    return report.dump(2) + "\n";
}

std::string correlations_csv(const TestCorrelationMatrix& matrix) {
    const size_t m = matrix.tests.size();
    auto block = [&](auto value) {
        std::string out = "test_id";
        for (const TestKey& key : matrix.tests) out += "," + csv::escape_field(key.id);
        out += "\n";
        for (size_t i = 0; i < m; ++i) {
            out += csv::escape_field(matrix.tests[i].id);
            for (size_t j = 0; j < m; ++j)
                out += i == j ? std::string(",") : "," + format_r(value(i, j));
            out += "\n";
        }
        return out;
    };
    return block([&](size_t i, size_t j) { return matrix.at(i, j).r; }) + "\n" +
           block([&](size_t i, size_t j) { return matrix.at(i, j).p_two_sided; });
}

}  // namespace trendmine::screening
