#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trendmine/archetype.hpp"
#include "trendmine/data_model.hpp"

namespace trendmine::clustering {

// Per-student shape+value feature vector: per-test levels in chronological
// order, then every pairwise later-minus-earlier difference ordered by
// descending later index and ascending earlier index, so that m=3 yields
// (x1, x2, x3, x3-x1, x3-x2, x2-x1).
struct TrendVector {
    std::string student_id;
    std::vector<double> levels;  // length m
    std::vector<double> diffs;   // length m(m-1)/2

    std::vector<double> flat() const;
};

enum class VectorScale { deviation, ratio };

std::string to_string(VectorScale scale);
VectorScale parse_vector_scale(std::string_view text);

struct Clustering {
    int k = 0;
    std::vector<std::vector<double>> centroids;  // k x (m + m(m-1)/2)
    std::map<std::string, int> assignment;       // student -> cluster index
    std::map<int, ArchetypeLabel> labels;
    double inertia = 0.0;
    uint64_t seed = 0;
    int iterations = 0;
    int level_count = 0;  // m, number of retained tests behind the vectors
    VectorScale scale = VectorScale::deviation;
};

struct ClusterPairing {
    int cluster_a = 0;
    int cluster_b = 0;
    ArchetypeLabel label;
    double centroid_distance = 0.0;
};

struct ConsistencyReport {
    enum class Verdict { consistent, inconsistent };
    Verdict verdict = Verdict::inconsistent;
    std::vector<std::vector<ArchetypeLabel>> label_multisets;  // per cohort, sorted
    std::vector<ClusterPairing> pairing;
};

std::vector<TrendVector> build_trend_vectors(const ScorePanel& panel,
                                             const std::vector<TestKey>& retained,
                                             ScoreKind score_kind,
                                             VectorScale scale,
                                             bool sigma_zero_fallback = false);

// Lloyd iterations from a k-means++ start. Deterministic in (vectors, k,
// seed); empty clusters are reseeded with the point farthest from its
// centroid; the within-cluster sum of squares never increases.
Clustering kmeans(const std::vector<TrendVector>& vectors, int k, uint64_t seed,
                  int max_iter = 300, double tol = 1e-6);

// Best of `restarts` runs seeded seed, seed+1, ...; minimal inertia wins,
// ties by lowest seed.
Clustering kmeans_restarts(const std::vector<TrendVector>& vectors, int k,
                           uint64_t seed, int restarts, int max_iter = 300,
                           double tol = 1e-6);

// Names clusters from the start/end of the centroid level block using the
// deviation-score midpoint 50. On any other scale every cluster gets
// other(index).
std::map<int, ArchetypeLabel> label_clusters(const Clustering& clustering);

ConsistencyReport match_clusterings(const Clustering& a, const Clustering& b);

double adjusted_rand_index(const std::map<std::string, int>& a,
                           const std::map<std::string, int>& b);

std::string clusters_csv(const Clustering& clustering);
std::string centroids_csv(const Clustering& clustering,
                          const std::vector<TestKey>& retained);
std::string centroid_trajectories_svg(const Clustering& clustering,
                                      const std::vector<TestKey>& retained);
std::string consistency_report_json(const ConsistencyReport& report,
                                    const std::vector<std::string>& cohort_ids);

}  // namespace trendmine::clustering
