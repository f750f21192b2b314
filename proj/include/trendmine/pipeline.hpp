#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "trendmine/clustering.hpp"
#include "trendmine/data_model.hpp"
#include "trendmine/inference.hpp"
#include "trendmine/screening.hpp"

namespace trendmine::pipeline {

struct CohortInput {
    std::string id;
    std::filesystem::path score_csv;
};

struct RunConfig {
    std::vector<CohortInput> cohorts;
    std::filesystem::path manifest_csv;
    Subject subject = Subject::mathematics();

    screening::ScreeningPolicy screening;

    struct {
        int k = 4;
        uint64_t seed = 0;
        int restarts = 1;
        clustering::VectorScale mode = clustering::VectorScale::deviation;
        bool sigma_zero_fallback = false;
    } cluster;

    struct {
        std::string baseline_test_id;
        std::vector<std::pair<ArchetypeLabel, ArchetypeLabel>> pairs;  // positive, negative
        double vif_threshold = 10.0;
        double alpha = 0.10;
        bool ridge_fallback = false;
    } inference;

    bool skip_screening = false;
    bool require_consistency = false;
    std::filesystem::path out_dir = "out";
};

RunConfig config_from_json(const std::string& json_text,
                           const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& config_path);
std::string config_canonical_json(const RunConfig& config);

// Stage entry points. Each reads its inputs (and any prior stage outputs)
// from disk and writes its report files, so composing them manually is
// byte-identical to run_all.
void run_screen(const RunConfig& config);
void run_cluster(const RunConfig& config);
void run_infer(const RunConfig& config);
void run_all(const RunConfig& config);

// In-memory pipeline result, used by run_* internally and by tests that
// bypass the filesystem.
struct CohortArtifacts {
    std::string cohort_id;
    ScorePanel panel;  // the clustering subject's panel
    screening::TestCorrelationMatrix matrix;
    screening::ScreeningOutcome screening_outcome;
    clustering::Clustering clusters;
};

struct PipelineResult {
    std::vector<CohortArtifacts> cohorts;
    std::vector<TestKey> common_tests;  // keys of the first cohort
    std::optional<clustering::ConsistencyReport> consistency;
    // per pair: per-cohort fits/tiers and the cross-cohort common factors
    struct PairResult {
        ArchetypeLabel positive;
        ArchetypeLabel negative;
        std::vector<std::pair<std::string, inference::LogisticFit>> fits;
        std::vector<std::pair<std::string, std::vector<inference::TierEntry>>> tiers;
        inference::FactorReport factors;
    };
    std::vector<PairResult> pairs;
};

// Runs screen -> intersect -> cluster -> match -> infer in memory from
// already-parsed panels. Each cohort contributes every (cohort, subject)
// panel of its score file; the config subject's panel drives screening and
// clustering, and the baseline test may live in any of them.
PipelineResult run_pipeline(const std::vector<std::vector<ScorePanel>>& cohort_panels,
                            const Manifest& manifest, const RunConfig& config);

uint64_t fnv1a64(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

}  // namespace trendmine::pipeline
