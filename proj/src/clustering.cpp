#include "trendmine/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trendmine/csv.hpp"
#include "trendmine/rng.hpp"
#include "trendmine/stats.hpp"

namespace trendmine::clustering {

namespace {

using ordered_json = nlohmann::ordered_json;

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

std::string format_value(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

}  // namespace

std::vector<double> TrendVector::flat() const {
    std::vector<double> out;
    out.reserve(levels.size() + diffs.size());
    out.insert(out.end(), levels.begin(), levels.end());
    out.insert(out.end(), diffs.begin(), diffs.end());
    return out;
}

std::string to_string(VectorScale scale) {
    return scale == VectorScale::deviation ? "deviation" : "ratio";
}

VectorScale parse_vector_scale(std::string_view text) {
    if (text == "deviation") return VectorScale::deviation;
    if (text == "ratio") return VectorScale::ratio;
    throw input_error("unknown vector scale: " + std::string(text));
}

std::vector<TrendVector> build_trend_vectors(const ScorePanel& panel,
                                             const std::vector<TestKey>& retained,
                                             ScoreKind score_kind, VectorScale scale,
                                             bool sigma_zero_fallback) {
    const size_t m = retained.size();
    if (m < 2) throw input_error("trend vectors need at least 2 retained tests");

    std::vector<size_t> test_idx;
    test_idx.reserve(m);
    for (const TestKey& key : retained) test_idx.push_back(panel.test_index(key.id));

    // levels[t][s]
    std::vector<std::vector<double>> levels(m,
                                            std::vector<double>(panel.students.size()));
    for (size_t t = 0; t < m; ++t) {
        if (scale == VectorScale::ratio) {
            for (size_t s = 0; s < panel.students.size(); ++s)
                levels[t][s] = panel.aggregate_value(s, test_idx[t], score_kind);
        } else {
            std::map<std::string, double> raw;
            for (size_t s = 0; s < panel.students.size(); ++s)
                raw[panel.students[s]] =
                    panel.aggregate_value(s, test_idx[t], score_kind);
            const stats::DeviationScoreSet dev =
                stats::deviation_scores(raw, sigma_zero_fallback);
            for (size_t s = 0; s < panel.students.size(); ++s)
                levels[t][s] = dev.scores.at(panel.students[s]);
        }
    }

    std::vector<TrendVector> vectors;
    vectors.reserve(panel.students.size());
    for (size_t s = 0; s < panel.students.size(); ++s) {
        TrendVector v;
        v.student_id = panel.students[s];
        v.levels.reserve(m);
        for (size_t t = 0; t < m; ++t) v.levels.push_back(levels[t][s]);
        v.diffs.reserve(m * (m - 1) / 2);
        for (size_t later = m - 1; later >= 1; --later)
            for (size_t earlier = 0; earlier < later; ++earlier)
                v.diffs.push_back(v.levels[later] - v.levels[earlier]);
        vectors.push_back(std::move(v));
    }
    return vectors;
}

Clustering kmeans(const std::vector<TrendVector>& vectors, int k, uint64_t seed,
                  int max_iter, double tol) {
    const size_t n = vectors.size();
    if (k < 1) throw input_error("k must be at least 1");
    if (n < static_cast<size_t>(k))
        throw input_error("k=" + std::to_string(k) + " exceeds " + std::to_string(n) +
                          " vectors");

    std::vector<std::vector<double>> points;
    points.reserve(n);
    const size_t dim = vectors[0].levels.size() + vectors[0].diffs.size();
    for (const TrendVector& v : vectors) {
        std::vector<double> flat = v.flat();
        if (flat.size() != dim)
            throw input_error("trend vectors have mixed dimensions");
        for (double x : flat)
            if (!std::isfinite(x))
                throw input_error("non-finite value in trend vector for student '" +
                                  v.student_id + "'");
        points.push_back(std::move(flat));
    }

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(static_cast<size_t>(k));
    centroids.push_back(points[rng.uniform_index(n)]);
    std::vector<double> d2(n);
    while (centroids.size() < static_cast<size_t>(k)) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centroids)
                best = std::min(best, squared_distance(points[i], c));
            d2[i] = best;
            total += best;
        }
        size_t chosen;
        if (total <= 0.0) {
            chosen = rng.uniform_index(n);
        } else {
            const double target = rng.uniform01() * total;
            double cum = 0.0;
            chosen = n - 1;
            for (size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum >= target) {
                    chosen = i;
                    break;
                }
            }
        }
        centroids.push_back(points[chosen]);
    }

    std::vector<int> assign(n, 0);
    double previous_inertia = std::numeric_limits<double>::max();
    int iterations = 0;
    double inertia = 0.0;

    for (int iter = 0; iter < max_iter; ++iter) {
        ++iterations;
        // Assignment (ties to the lowest cluster index).
        inertia = 0.0;
        for (size_t i = 0; i < n; ++i) {
            int best_c = 0;
            double best_d = squared_distance(points[i], centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(points[i], centroids[c]);
                if (d < best_d) {
                    best_d = d;
                    best_c = c;
                }
            }
            assign[i] = best_c;
            inertia += best_d;
        }

        // Reseed empty clusters with the farthest point from its centroid,
        // never emptying its source cluster.
        std::vector<size_t> count(static_cast<size_t>(k), 0);
        for (int a : assign) ++count[static_cast<size_t>(a)];
        for (int c = 0; c < k; ++c) {
            if (count[static_cast<size_t>(c)] > 0) continue;
            size_t farthest = n;
            double far_d = -1.0;
            for (size_t i = 0; i < n; ++i) {
                if (count[static_cast<size_t>(assign[i])] < 2) continue;
                const double d =
                    squared_distance(points[i], centroids[static_cast<size_t>(assign[i])]);
                if (d > far_d) {
                    far_d = d;
                    farthest = i;
                }
            }
            if (farthest == n)
                throw numeric_error("cannot repair empty cluster " + std::to_string(c));
            inertia -= far_d;  // the reseeded point now sits on its centroid
            --count[static_cast<size_t>(assign[farthest])];
            assign[farthest] = c;
            ++count[static_cast<size_t>(c)];
            centroids[static_cast<size_t>(c)] = points[farthest];
        }

        if (inertia > previous_inertia + 1e-9 * (1.0 + previous_inertia))
            throw numeric_error("k-means inertia increased between iterations");
        previous_inertia = inertia;

        // Update step.
        std::vector<std::vector<double>> next(static_cast<size_t>(k),
                                              std::vector<double>(dim, 0.0));
        for (size_t i = 0; i < n; ++i)
            for (size_t d = 0; d < dim; ++d)
                next[static_cast<size_t>(assign[i])][d] += points[i][d];
        for (int c = 0; c < k; ++c)
            for (size_t d = 0; d < dim; ++d)
                next[static_cast<size_t>(c)][d] /=
                    static_cast<double>(count[static_cast<size_t>(c)]);

        double shift = 0.0;
        for (int c = 0; c < k; ++c)
            shift = std::max(shift, std::sqrt(squared_distance(
                                        centroids[static_cast<size_t>(c)],
                                        next[static_cast<size_t>(c)])));
        centroids = std::move(next);
        if (shift < tol) break;
    }

    // Final assignment against the converged centroids.
    inertia = 0.0;
    for (size_t i = 0; i < n; ++i) {
        int best_c = 0;
        double best_d = squared_distance(points[i], centroids[0]);
        for (int c = 1; c < k; ++c) {
            const double d = squared_distance(points[i], centroids[c]);
            if (d < best_d) {
                best_d = d;
                best_c = c;
            }
        }
        assign[i] = best_c;
        inertia += best_d;
    }

    Clustering result;
    result.k = k;
    result.centroids = std::move(centroids);
    result.inertia = inertia;
    result.seed = seed;
    result.iterations = iterations;
    result.level_count = static_cast<int>(vectors[0].levels.size());
    for (size_t i = 0; i < n; ++i) result.assignment[vectors[i].student_id] = assign[i];
    return result;
}

Clustering kmeans_restarts(const std::vector<TrendVector>& vectors, int k,
                           uint64_t seed, int restarts, int max_iter, double tol) {
    if (restarts < 1) throw input_error("restarts must be at least 1");
    Clustering best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        Clustering run = kmeans(vectors, k, seed + static_cast<uint64_t>(r), max_iter, tol);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }
    return best;
}

std::map<int, ArchetypeLabel> label_clusters(const Clustering& clustering) {
    std::map<int, ArchetypeLabel> labels;
    const int m = clustering.level_count;
    if (m < 1) throw input_error("clustering has no level block to label from");
    for (int c = 0; c < clustering.k; ++c) {
        if (clustering.scale != VectorScale::deviation) {
            labels[c] = ArchetypeLabel::other(c);
            continue;
        }
        const double start = clustering.centroids[static_cast<size_t>(c)][0];
        const double end =
            clustering.centroids[static_cast<size_t>(c)][static_cast<size_t>(m - 1)];
        if (start >= 50.0)
            labels[c] = end >= 50.0 ? ArchetypeLabel::stay_high()
                                    : ArchetypeLabel::decrease();
        else
            labels[c] =
                end >= 50.0 ? ArchetypeLabel::increase() : ArchetypeLabel::stay_low();
    }
    return labels;
}

ConsistencyReport match_clusterings(const Clustering& a, const Clustering& b) {
    if (a.k != b.k) throw input_error("clusterings differ in k");
    if (a.centroids.at(0).size() != b.centroids.at(0).size())
        throw input_error("clusterings differ in vector dimension");
    if (a.labels.size() != static_cast<size_t>(a.k) ||
        b.labels.size() != static_cast<size_t>(b.k))
        throw input_error("clusterings must be labeled before matching");

    ConsistencyReport report;
    std::vector<ArchetypeLabel> la, lb;
    for (const auto& [c, label] : a.labels) la.push_back(label);
    for (const auto& [c, label] : b.labels) lb.push_back(label);
    std::sort(la.begin(), la.end());
    std::sort(lb.begin(), lb.end());
    report.label_multisets = {la, lb};
    report.verdict = la == lb ? ConsistencyReport::Verdict::consistent
                              : ConsistencyReport::Verdict::inconsistent;

    // Greedy pairing of equal-label clusters by minimal centroid distance.
    std::vector<bool> used_a(static_cast<size_t>(a.k), false);
    std::vector<bool> used_b(static_cast<size_t>(b.k), false);
    while (true) {
        int best_i = -1, best_j = -1;
        double best_d = std::numeric_limits<double>::max();
        for (int i = 0; i < a.k; ++i) {
            if (used_a[static_cast<size_t>(i)]) continue;
            for (int j = 0; j < b.k; ++j) {
                if (used_b[static_cast<size_t>(j)]) continue;
                if (!(a.labels.at(i) == b.labels.at(j))) continue;
                const double d = std::sqrt(squared_distance(
                    a.centroids[static_cast<size_t>(i)], b.centroids[static_cast<size_t>(j)]));
                if (d < best_d) {
                    best_d = d;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        if (best_i < 0) break;
        used_a[static_cast<size_t>(best_i)] = true;
        used_b[static_cast<size_t>(best_j)] = true;
        report.pairing.push_back({best_i, best_j, a.labels.at(best_i), best_d});
    }
    return report;
}

double adjusted_rand_index(const std::map<std::string, int>& a,
                           const std::map<std::string, int>& b) {
    if (a.size() != b.size())
        throw input_error("ARI inputs cover different student sets");
    for (const auto& [student, cluster] : a)
        if (!b.count(student))
            throw input_error("ARI inputs cover different student sets: missing '" +
                              student + "'");

    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> count_a, count_b;
    const double n = static_cast<double>(a.size());
    for (const auto& [student, ca] : a) {
        const int cb = b.at(student);
        joint[{ca, cb}] += 1.0;
        count_a[ca] += 1.0;
        count_b[cb] += 1.0;
    }
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, c] : joint) sum_joint += choose2(c);
    for (const auto& [key, c] : count_a) sum_a += choose2(c);
    for (const auto& [key, c] : count_b) sum_b += choose2(c);
    const double expected = sum_a * sum_b / choose2(n);
    const double maximum = 0.5 * (sum_a + sum_b) - expected;
    if (maximum == 0.0) return 1.0;  // both partitions degenerate and identical
    return (sum_joint - expected) / maximum;
}

std::string clusters_csv(const Clustering& clustering) {
    std::string out = "student_id,cluster_index,label\n";
    for (const auto& [student, cluster] : clustering.assignment)
        out += csv::join_row({student, std::to_string(cluster),
                              to_string(clustering.labels.at(cluster))});
    return out;
}

std::string centroids_csv(const Clustering& clustering,
                          const std::vector<TestKey>& retained) {
    const size_t m = retained.size();
    std::vector<std::string> header = {"cluster_index", "label"};
    for (const TestKey& key : retained) header.push_back("level_" + key.id);
    for (size_t later = m - 1; later >= 1; --later)
        for (size_t earlier = 0; earlier < later; ++earlier)
            header.push_back("diff_" + retained[later].id + "_minus_" +
                             retained[earlier].id);
    std::string out = csv::join_row(header);
    for (int c = 0; c < clustering.k; ++c) {
        std::vector<std::string> row = {std::to_string(c),
                                        to_string(clustering.labels.at(c))};
        for (double v : clustering.centroids[static_cast<size_t>(c)])
            row.push_back(format_value(v));
        out += csv::join_row(row);
    }
    return out;
}

std::string centroid_trajectories_svg(const Clustering& clustering,
                                      const std::vector<TestKey>& retained) {
    const size_t m = retained.size();
    const double width = 780.0, height = 420.0;
    const double left = 60.0, right = 600.0, top = 30.0, bottom = 370.0;

    double lo = std::numeric_limits<double>::max();
    double hi = std::numeric_limits<double>::lowest();
    for (int c = 0; c < clustering.k; ++c)
        for (size_t t = 0; t < m; ++t) {
            lo = std::min(lo, clustering.centroids[static_cast<size_t>(c)][t]);
            hi = std::max(hi, clustering.centroids[static_cast<size_t>(c)][t]);
        }
    const double pad = std::max(1.0, (hi - lo) * 0.15);
    lo -= pad;
    hi += pad;

    auto x_at = [&](size_t t) {
        return m == 1 ? (left + right) / 2.0
                      : left + (right - left) * static_cast<double>(t) /
                            static_cast<double>(m - 1);
    };
    auto y_at = [&](double v) { return bottom - (bottom - top) * (v - lo) / (hi - lo); };

    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    svg << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "  <line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
        << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
    svg << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
        << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
    if (clustering.scale == VectorScale::deviation && lo < 50.0 && hi > 50.0)
        svg << "  <line x1=\"" << left << "\" y1=\"" << format_value(y_at(50.0))
            << "\" x2=\"" << right << "\" y2=\"" << format_value(y_at(50.0))
            << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n";
    for (size_t t = 0; t < m; ++t) {
        svg << "  <text x=\"" << format_value(x_at(t)) << "\" y=\"" << bottom + 20.0
            << "\" font-size=\"11\" text-anchor=\"middle\">"
            << retained[t].id << "</text>\n";
    }
    for (int c = 0; c < clustering.k; ++c) {
        svg << "  <polyline fill=\"none\" stroke=\"" << kPalette[c % 8]
            << "\" stroke-width=\"2\" points=\"";
        for (size_t t = 0; t < m; ++t) {
            if (t) svg << " ";
            svg << format_value(x_at(t)) << ","
                << format_value(y_at(clustering.centroids[static_cast<size_t>(c)][t]));
        }
        svg << "\"/>\n";
        svg << "  <text x=\"" << right + 6.0 << "\" y=\""
            << format_value(y_at(
                   clustering.centroids[static_cast<size_t>(c)][m - 1]))
            << "\" font-size=\"11\" fill=\"" << kPalette[c % 8] << "\">"
            << to_string(clustering.labels.at(c)) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string consistency_report_json(const ConsistencyReport& report,
                                    const std::vector<std::string>& cohort_ids) {
    ordered_json out;
    out["verdict"] = report.verdict == ConsistencyReport::Verdict::consistent
                         ? "consistent"
                         : "inconsistent";
    out["label_multisets"] = ordered_json::object();
    for (size_t i = 0; i < report.label_multisets.size(); ++i) {
        ordered_json labels = ordered_json::array();
        for (const ArchetypeLabel& label : report.label_multisets[i])
            labels.push_back(to_string(label));
        out["label_multisets"][i < cohort_ids.size() ? cohort_ids[i]
                                                     : std::to_string(i)] = labels;
    }
    out["pairing"] = ordered_json::array();
    for (const ClusterPairing& pair : report.pairing)
        out["pairing"].push_back({{"cluster_a", pair.cluster_a},
                                  {"cluster_b", pair.cluster_b},
                                  {"label", to_string(pair.label)},
                                  {"centroid_distance", pair.centroid_distance}});
    return out.dump(2) + "\n";
}

}  // namespace trendmine::clustering
