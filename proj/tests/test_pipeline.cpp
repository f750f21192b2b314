#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trendmine/pipeline.hpp"
#include "trendmine/synth.hpp"

using namespace trendmine;
using namespace trendmine::pipeline;

namespace {

RunConfig twin_config() {
    RunConfig config;
    config.cohorts = {{"c1", "c1/score.csv"}, {"c2", "c2/score.csv"}};
    config.screening.theta_low = 0.70;
    config.cluster.k = 4;
    config.cluster.seed = 17;
    config.cluster.restarts = 8;
    config.inference.baseline_test_id = "g4l";
    config.inference.pairs = {
        {ArchetypeLabel::stay_high(), ArchetypeLabel::decrease()},
        {ArchetypeLabel::increase(), ArchetypeLabel::stay_low()}};
    config.inference.ridge_fallback = true;
    return config;
}

synth::SynthSpec twin_spec(const std::string& cohort_id, uint64_t seed) {
    synth::SynthSpec spec = synth::SynthSpec::defaults();
    spec.n_students = 200;
    spec.n_tests = 5;
    spec.items_per_test = 32;
    spec.shift_positions = {2};
    spec.noise_sd = 3.0;
    spec.causal_items = {{6, 2.5}, {13, -2.5}};
    spec.cohort_id = cohort_id;
    spec.seed = seed;
    return spec;
}

// Oracle clustering built from the ground truth itself.
clustering::Clustering truth_clustering(const synth::SynthCohort& cohort) {
    clustering::Clustering clusters;
    clusters.k = 4;
    clusters.level_count = 3;
    clusters.scale = clustering::VectorScale::deviation;
    const std::vector<ArchetypeLabel> order = {
        ArchetypeLabel::stay_high(), ArchetypeLabel::stay_low(),
        ArchetypeLabel::increase(), ArchetypeLabel::decrease()};
    for (int c = 0; c < 4; ++c) {
        clusters.labels[c] = order[static_cast<size_t>(c)];
        clusters.centroids.push_back(
            synth::archetype_template(order[static_cast<size_t>(c)], 3));
    }
    for (const auto& [student, label] : cohort.truth.archetype)
        for (int c = 0; c < 4; ++c)
            if (order[static_cast<size_t>(c)] == label) clusters.assignment[student] = c;
    return clusters;
}

}  // namespace

TEST_CASE("build_design contrasts exactly the two requested clusters") {
    synth::SynthSpec spec = twin_spec("c1", 31);
    spec.n_tests = 3;
    spec.shift_positions.clear();
    const synth::SynthCohort cohort = synth::generate_cohort(spec);
    const clustering::Clustering clusters = truth_clustering(cohort);

    const TestKey baseline = cohort.evidence_panel.tests[0];
    const inference::DesignMatrix design = inference::build_design(
        cohort.evidence_panel, baseline, clusters, ArchetypeLabel::stay_high(),
        ArchetypeLabel::decrease());

    size_t expect_pos = 0, expect_neg = 0;
    for (const auto& [student, label] : cohort.truth.archetype) {
        if (label == ArchetypeLabel::stay_high()) ++expect_pos;
        if (label == ArchetypeLabel::decrease()) ++expect_neg;
    }
    CHECK(static_cast<size_t>(design.target.sum()) == expect_pos);
    CHECK(design.row_students.size() == expect_pos + expect_neg);
    CHECK(design.columns.size() == 20);  // evidence items

    CHECK_THROWS_AS(
        inference::build_design(cohort.evidence_panel, baseline, clusters,
                                ArchetypeLabel::stay_high(),
                                ArchetypeLabel::stay_high()),
        input_error);
}

TEST_CASE("in-memory pipeline recovers the planted structure on twin cohorts") {
    const synth::SynthCohort c1 = synth::generate_cohort(twin_spec("c1", 12345));
    const synth::SynthCohort c2 = synth::generate_cohort(twin_spec("c2", 54321));
    const Manifest manifest = synth::cohort_manifest(c1);
    const RunConfig config = twin_config();

    const PipelineResult result =
        run_pipeline({{c1.panel, c1.evidence_panel}, {c2.panel, c2.evidence_panel}},
                     manifest, config);

    // the shifted test is gone from both retained chains
    for (const CohortArtifacts& cohort : result.cohorts) {
        bool shifted_retained = false;
        for (const TestKey& key : cohort.screening_outcome.retained)
            if (key.id == "g6m") shifted_retained = true;
        CHECK(!shifted_retained);
    }
    CHECK(result.common_tests.size() == 4);

    // clusters recover the planted archetypes
    const double ari1 = clustering::adjusted_rand_index(
        result.cohorts[0].clusters.assignment,
        truth_clustering(c1).assignment);
    const double ari2 = clustering::adjusted_rand_index(
        result.cohorts[1].clusters.assignment,
        truth_clustering(c2).assignment);
    CHECK(ari1 >= 0.8);
    CHECK(ari2 >= 0.8);

    REQUIRE(result.consistency.has_value());
    CHECK(result.consistency->verdict ==
          clustering::ConsistencyReport::Verdict::consistent);

    // both planted items surface as cross-cohort common factors with the
    // planted signs (+ for item 4, - for item 12, both tilting ends-high)
    REQUIRE(result.pairs.size() == 2);
    auto find_factor = [&](const std::string& topic) {
        double sign = 0.0;
        for (const PipelineResult::PairResult& pair : result.pairs)
            for (const inference::CommonFactor& factor : pair.factors.common_factors)
                if (factor.topic == topic) {
                    sign = 1.0;
                    for (const auto& [cohort, items] : factor.per_cohort)
                        for (const auto& [item, coef] : items)
                            if (coef < 0) sign = -1.0;
                }
        return sign;
    };
    CHECK(find_factor("skill g4l-7") == 1.0);
    CHECK(find_factor("skill g4l-14") == -1.0);
}

TEST_CASE("config JSON parsing honors defaults and overrides") {
    const std::string json = R"({
      "cohorts": [{"id": "c1", "score_csv": "c1/score.csv"}],
      "manifest_csv": "manifest.csv",
      "subject": "mathematics",
      "screening": {"theta_low": 0.65, "min_chain": 2},
      "clustering": {"k": 3, "seed": 5, "restarts": 2, "mode": "ratio"},
      "inference": {"baseline_test": "t0", "alpha": 0.05,
                    "pairs": [{"positive": "stay_high_stably",
                               "negative": "decrease_from_high"}]},
      "skip_screening": true,
      "out_dir": "reports"
    })";
    const RunConfig config = config_from_json(json, "/base");
    CHECK(config.cohorts.size() == 1);
    CHECK(config.cohorts[0].score_csv == std::filesystem::path("/base/c1/score.csv"));
    CHECK(config.manifest_csv == std::filesystem::path("/base/manifest.csv"));
    CHECK(config.screening.theta_low == 0.65);
    CHECK(config.screening.min_chain == 2);
    CHECK(config.screening.score_kind == ScoreKind::correct_ratio);
    CHECK(config.cluster.k == 3);
    CHECK(config.cluster.mode == clustering::VectorScale::ratio);
    CHECK(config.inference.alpha == 0.05);
    CHECK(config.skip_screening);
    CHECK(config.out_dir == std::filesystem::path("/base/reports"));

    // canonical form is stable
    CHECK(config_canonical_json(config) == config_canonical_json(config));

    const std::string bad_theta = R"({
      "cohorts": [{"id": "c1", "score_csv": "x.csv"}],
      "manifest_csv": "m.csv",
      "screening": {"theta_low": 1.5}
    })";
    CHECK_THROWS_AS(config_from_json(bad_theta, "."), input_error);
}

TEST_CASE("skip-screening keeps the full chain and declines naming") {
    const synth::SynthCohort c1 = synth::generate_cohort(twin_spec("c1", 777));
    const synth::SynthCohort c2 = synth::generate_cohort(twin_spec("c2", 778));
    const Manifest manifest = synth::cohort_manifest(c1);

    RunConfig config = twin_config();
    config.skip_screening = true;
    config.cluster.mode = clustering::VectorScale::ratio;
    config.inference.pairs.clear();  // named labels do not exist in ratio mode

    const PipelineResult result =
        run_pipeline({{c1.panel, c1.evidence_panel}, {c2.panel, c2.evidence_panel}},
                     manifest, config);
    CHECK(result.cohorts[0].screening_outcome.retained.size() == 5);
    CHECK(result.cohorts[0].screening_outcome.excluded.empty());
    CHECK(result.common_tests.size() == 5);
    for (const auto& [cluster, label] : result.cohorts[0].clusters.labels)
        CHECK(label == ArchetypeLabel::other(cluster));
}

TEST_CASE("screening report and correlations CSV are well-formed") {
    const synth::SynthCohort cohort = synth::generate_cohort(twin_spec("c1", 99));
    const screening::TestCorrelationMatrix matrix =
        screening::correlation_matrix(cohort.panel, screening::ScreeningPolicy{});
    const screening::ScreeningOutcome outcome =
        screening::screen_tests(matrix, screening::ScreeningPolicy{});

    const auto report = nlohmann::json::parse(
        screening::screening_report_json(outcome, matrix, screening::ScreeningPolicy{}));
    CHECK(report.at("retained").size() == outcome.retained.size());
    CHECK(report.at("excluded").size() == outcome.excluded.size());
    CHECK(report.at("correlations").size() == 10);  // C(5,2)

    const std::string csv_text = screening::correlations_csv(matrix);
    // two blocks (r and p), each 1 header + 5 rows, separated by a blank line
    CHECK(std::count(csv_text.begin(), csv_text.end(), '\n') == 13);
}
