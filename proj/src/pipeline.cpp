#include "trendmine/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trendmine/csv.hpp"

namespace trendmine::pipeline {

namespace {

using ordered_json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot read file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write file: " + path.string());
    out << content;
}

long elapsed_ms(Clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start)
        .count();
}

std::string pair_slug(const ArchetypeLabel& positive, const ArchetypeLabel& negative) {
    return to_string(positive) + "_vs_" + to_string(negative);
}

struct LoadedInputs {
    Manifest manifest;
    std::vector<ScorePanel> subject_panels;           // per cohort, config subject
    std::vector<std::vector<ScorePanel>> all_panels;  // per cohort, every series
};

LoadedInputs load_inputs(const RunConfig& config) {
    if (config.cohorts.empty()) throw input_error("config lists no cohorts");
    LoadedInputs inputs;
    inputs.manifest = parse_test_manifest(read_file(config.manifest_csv));
    for (const CohortInput& cohort : config.cohorts) {
        std::vector<ParsedPanel> parsed =
            parse_score_panels(read_file(cohort.score_csv), inputs.manifest);
        std::vector<ScorePanel> panels;
        for (ParsedPanel& p : parsed) {
            for (const std::string& warning : p.warnings)
                std::cerr << "[parse] " << cohort.score_csv.string() << ": " << warning
                          << "\n";
            panels.push_back(std::move(p.panel));
        }
        const ScorePanel* subject_panel = nullptr;
        for (const ScorePanel& panel : panels)
            if (panel.cohort_id == cohort.id && panel.subject == config.subject)
                subject_panel = &panel;
        if (!subject_panel)
            throw input_error("cohort '" + cohort.id + "' has no " +
                              to_string(config.subject) + " tests in " +
                              cohort.score_csv.string());
        inputs.subject_panels.push_back(*subject_panel);
        inputs.all_panels.push_back(std::move(panels));
    }
    return inputs;
}

std::filesystem::path cohort_dir(const RunConfig& config, const std::string& cohort_id) {
    return config.out_dir / cohort_id;
}

screening::ScreeningOutcome screen_one(const ScorePanel& panel,
                                       const screening::TestCorrelationMatrix& matrix,
                                       const RunConfig& config) {
    if (config.skip_screening) {
        screening::ScreeningOutcome outcome;
        outcome.retained = panel.tests;
        for (size_t i = 0; i + 1 < panel.tests.size(); ++i)
            outcome.final_consecutive_r.push_back(matrix.at(i, i + 1).r);
        return outcome;
    }
    return screening::screen_tests(matrix, config.screening);
}

// Retained keys for one cohort as recorded by the screening stage.
std::vector<TestKey> read_retained(const RunConfig& config, const ScorePanel& panel) {
    const std::filesystem::path path =
        cohort_dir(config, panel.cohort_id) / "screening_report.json";
    if (!std::filesystem::exists(path))
        throw input_error("missing screening output " + path.string() +
                          "; run the screen stage first");
    const auto report = nlohmann::json::parse(read_file(path));
    std::vector<TestKey> retained;
    for (const auto& id : report.at("retained"))
        retained.push_back(panel.tests[panel.test_index(id.get<std::string>())]);
    return retained;
}

struct StoredClustering {
    clustering::Clustering clusters;
};

clustering::Clustering read_clusters(const RunConfig& config,
                                     const std::string& cohort_id) {
    const std::filesystem::path path = cohort_dir(config, cohort_id) / "clusters.csv";
    if (!std::filesystem::exists(path))
        throw input_error("missing clustering output " + path.string() +
                          "; run the cluster stage first");
    const auto rows = csv::parse(read_file(path));
    clustering::Clustering clusters;
    clusters.k = 0;
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& fields = rows[i].fields;
        if (fields.size() != 3)
            throw input_error(path.string() + ": malformed row " + std::to_string(i));
        const int cluster = std::stoi(fields[1]);
        clusters.assignment[fields[0]] = cluster;
        clusters.labels[cluster] = parse_archetype(fields[2]);
        clusters.k = std::max(clusters.k, cluster + 1);
    }
    return clusters;
}

PipelineResult::PairResult infer_pair(
    const std::vector<std::vector<ScorePanel>>& all_panels,
    const std::vector<std::string>& cohort_ids,
    const std::vector<clustering::Clustering>& clusterings, const Manifest& manifest,
    const RunConfig& config, const ArchetypeLabel& positive,
    const ArchetypeLabel& negative) {
    PipelineResult::PairResult result;
    result.positive = positive;
    result.negative = negative;

    for (size_t c = 0; c < cohort_ids.size(); ++c) {
        // The panel holding the baseline test may belong to another subject.
        const ScorePanel* baseline_panel = nullptr;
        for (const ScorePanel& panel : all_panels[c]) {
            const bool has_test =
                std::any_of(panel.tests.begin(), panel.tests.end(),
                            [&](const TestKey& t) {
                                return t.id == config.inference.baseline_test_id;
                            });
            if (has_test) baseline_panel = &panel;
        }
        if (!baseline_panel)
            throw input_error("baseline test '" + config.inference.baseline_test_id +
                              "' not found in cohort '" + cohort_ids[c] + "'");
        const TestKey baseline =
            baseline_panel->tests[baseline_panel->test_index(
                config.inference.baseline_test_id)];

        inference::DesignMatrix design = inference::build_design(
            *baseline_panel, baseline, clusterings[c], positive, negative);
        design = inference::reduce_variables(std::move(design),
                                             config.inference.vif_threshold);
        const inference::LogisticFit fit = inference::fit_logistic(
            design, 100, 1e-8, config.inference.ridge_fallback);
        const std::vector<inference::TierEntry> tiers =
            inference::significance_tiers(fit, manifest, design);
        result.fits.emplace_back(cohort_ids[c], fit);
        result.tiers.emplace_back(cohort_ids[c], tiers);
    }
    if (cohort_ids.size() >= 2)
        result.factors =
            inference::extract_common_factors(result.tiers, config.inference.alpha);
    else
        result.factors.per_cohort = result.tiers;
    return result;
}

ordered_json factors_json(const PipelineResult& result, const RunConfig& config) {
    ordered_json out;
    out["alpha"] = config.inference.alpha;
    out["baseline_test"] = config.inference.baseline_test_id;
    out["pairs"] = ordered_json::array();
    for (const PipelineResult::PairResult& pair : result.pairs) {
        ordered_json entry;
        entry["positive"] = to_string(pair.positive);
        entry["negative"] = to_string(pair.negative);
        entry["cohorts"] = ordered_json::object();
        for (size_t c = 0; c < pair.tiers.size(); ++c) {
            const auto& [cohort, tiers] = pair.tiers[c];
            const inference::LogisticFit& fit = pair.fits[c].second;
            ordered_json cohort_json;
            cohort_json["model"] = {{"mcfadden_r2", fit.mcfadden_r2},
                                    {"lr_test_p", fit.lr_test_p},
                                    {"converged", fit.converged},
                                    {"iterations", fit.iterations},
                                    {"ridge_used", fit.ridge_used}};
            cohort_json["items"] = ordered_json::array();
            for (const inference::TierEntry& tier : tiers)
                cohort_json["items"].push_back({{"item_id", tier.item_id},
                                                {"topic", tier.topic},
                                                {"coef", tier.coef},
                                                {"se", tier.se},
                                                {"p", tier.p},
                                                {"tier", tier.tier}});
            entry["cohorts"][cohort] = std::move(cohort_json);
        }
        entry["common_factors"] = ordered_json::array();
        for (const inference::CommonFactor& factor : pair.factors.common_factors) {
            ordered_json f;
            f["topic"] = factor.topic;
            f["cohorts"] = ordered_json::object();
            for (const auto& [cohort, items] : factor.per_cohort) {
                ordered_json hits = ordered_json::array();
                for (const auto& [item_id, coef] : items)
                    hits.push_back({{"item_id", item_id},
                                    {"coef", coef},
                                    {"sign", coef >= 0.0 ? "+" : "-"}});
                f["cohorts"][cohort] = std::move(hits);
            }
            entry["common_factors"].push_back(std::move(f));
        }
        out["pairs"].push_back(std::move(entry));
    }
    return out;
}

}  // namespace

uint64_t fnv1a64(std::string_view bytes) {
    uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

std::string file_digest(const std::filesystem::path& path) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(read_file(path))));
    return buf;
}

RunConfig config_from_json(const std::string& json_text,
                           const std::filesystem::path& base_dir) {
    const auto parsed = nlohmann::json::parse(json_text, nullptr, true, true);
    RunConfig config;

    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };

    for (const auto& cohort : parsed.at("cohorts"))
        config.cohorts.push_back({cohort.at("id").get<std::string>(),
                                  resolve(cohort.at("score_csv").get<std::string>())});
    config.manifest_csv = resolve(parsed.at("manifest_csv").get<std::string>());
    if (parsed.contains("subject"))
        config.subject = parse_subject(parsed["subject"].get<std::string>());

    if (parsed.contains("screening")) {
        const auto& s = parsed["screening"];
        if (s.contains("theta_low")) config.screening.theta_low = s["theta_low"].get<double>();
        if (s.contains("min_chain")) config.screening.min_chain = s["min_chain"].get<int>();
        if (s.contains("score_kind"))
            config.screening.score_kind = parse_score_kind(s["score_kind"].get<std::string>());
    }
    if (config.screening.theta_low <= 0.0 || config.screening.theta_low >= 1.0)
        throw input_error("theta_low must be inside (0, 1)");
    if (config.screening.min_chain < 2) throw input_error("min_chain must be at least 2");

    if (parsed.contains("clustering")) {
        const auto& c = parsed["clustering"];
        if (c.contains("k")) config.cluster.k = c["k"].get<int>();
        if (c.contains("seed")) config.cluster.seed = c["seed"].get<uint64_t>();
        if (c.contains("restarts")) config.cluster.restarts = c["restarts"].get<int>();
        if (c.contains("mode"))
            config.cluster.mode =
                clustering::parse_vector_scale(c["mode"].get<std::string>());
        if (c.contains("sigma_zero_fallback"))
            config.cluster.sigma_zero_fallback = c["sigma_zero_fallback"].get<bool>();
    }

    if (parsed.contains("inference")) {
        const auto& inf = parsed["inference"];
        if (inf.contains("baseline_test"))
            config.inference.baseline_test_id = inf["baseline_test"].get<std::string>();
        if (inf.contains("pairs"))
            for (const auto& pair : inf["pairs"])
                config.inference.pairs.emplace_back(
                    parse_archetype(pair.at("positive").get<std::string>()),
                    parse_archetype(pair.at("negative").get<std::string>()));
        if (inf.contains("vif_threshold"))
            config.inference.vif_threshold = inf["vif_threshold"].get<double>();
        if (inf.contains("alpha")) config.inference.alpha = inf["alpha"].get<double>();
        if (inf.contains("ridge_fallback"))
            config.inference.ridge_fallback = inf["ridge_fallback"].get<bool>();
    }
    if (!config.inference.pairs.empty() && config.cluster.k < 2)
        throw input_error("inference requires clustering k >= 2");

    if (parsed.contains("skip_screening"))
        config.skip_screening = parsed["skip_screening"].get<bool>();
    if (parsed.contains("require_consistency"))
        config.require_consistency = parsed["require_consistency"].get<bool>();
    if (parsed.contains("out_dir")) config.out_dir = resolve(parsed["out_dir"].get<std::string>());
    return config;
}

RunConfig load_config(const std::filesystem::path& config_path) {
    return config_from_json(read_file(config_path),
                            config_path.has_parent_path()
                                ? config_path.parent_path()
                                : std::filesystem::path("."));
}

std::string config_canonical_json(const RunConfig& config) {
    ordered_json out;
    out["cohorts"] = ordered_json::array();
    for (const CohortInput& cohort : config.cohorts)
        out["cohorts"].push_back(
            {{"id", cohort.id}, {"score_csv", cohort.score_csv.string()}});
    out["manifest_csv"] = config.manifest_csv.string();
    out["subject"] = to_string(config.subject);
    out["screening"] = {{"theta_low", config.screening.theta_low},
                        {"min_chain", config.screening.min_chain},
                        {"score_kind", to_string(config.screening.score_kind)}};
    out["clustering"] = {{"k", config.cluster.k},
                         {"seed", config.cluster.seed},
                         {"restarts", config.cluster.restarts},
                         {"mode", to_string(config.cluster.mode)},
                         {"sigma_zero_fallback", config.cluster.sigma_zero_fallback}};
    ordered_json pairs = ordered_json::array();
    for (const auto& [positive, negative] : config.inference.pairs)
        pairs.push_back(
            {{"positive", to_string(positive)}, {"negative", to_string(negative)}});
    out["inference"] = {{"baseline_test", config.inference.baseline_test_id},
                        {"pairs", std::move(pairs)},
                        {"vif_threshold", config.inference.vif_threshold},
                        {"alpha", config.inference.alpha},
                        {"ridge_fallback", config.inference.ridge_fallback}};
    out["skip_screening"] = config.skip_screening;
    out["require_consistency"] = config.require_consistency;
    out["out_dir"] = config.out_dir.string();
    return out.dump(2) + "\n";
}

PipelineResult run_pipeline(const std::vector<std::vector<ScorePanel>>& cohort_panels,
                            const Manifest& manifest, const RunConfig& config) {
    PipelineResult result;
    for (const std::vector<ScorePanel>& panels : cohort_panels) {
        const ScorePanel* subject_panel = nullptr;
        for (const ScorePanel& panel : panels)
            if (panel.subject == config.subject) subject_panel = &panel;
        if (!subject_panel)
            throw input_error("cohort has no " + to_string(config.subject) + " panel");
        CohortArtifacts artifacts;
        artifacts.cohort_id = subject_panel->cohort_id;
        artifacts.panel = *subject_panel;
        artifacts.matrix =
            screening::correlation_matrix(*subject_panel, config.screening);
        artifacts.screening_outcome =
            screen_one(*subject_panel, artifacts.matrix, config);
        result.cohorts.push_back(std::move(artifacts));
    }

    // Cross-cohort chain: the retained series present in every cohort.
    std::vector<ScorePanel> retained_views;
    for (CohortArtifacts& artifacts : result.cohorts) {
        ScorePanel view = artifacts.panel;
        view.tests = artifacts.screening_outcome.retained;
        retained_views.push_back(std::move(view));
    }
    std::vector<std::vector<TestKey>> per_cohort_common;
    if (cohort_panels.size() >= 2) {
        result.common_tests = intersect_common_tests(retained_views);
        for (const ScorePanel& view : retained_views) {
            std::vector<TestKey> keys;
            for (const TestKey& series : result.common_tests)
                for (const TestKey& candidate : view.tests)
                    if (same_series(candidate, series)) keys.push_back(candidate);
            per_cohort_common.push_back(std::move(keys));
        }
    } else {
        result.common_tests = retained_views[0].tests;
        per_cohort_common.push_back(result.common_tests);
    }

    std::vector<clustering::Clustering> clusterings;
    for (size_t c = 0; c < result.cohorts.size(); ++c) {
        std::vector<clustering::TrendVector> vectors = clustering::build_trend_vectors(
            result.cohorts[c].panel, per_cohort_common[c], config.screening.score_kind,
            config.cluster.mode, config.cluster.sigma_zero_fallback);
        clustering::Clustering clusters = clustering::kmeans_restarts(
            vectors, config.cluster.k, config.cluster.seed, config.cluster.restarts);
        clusters.scale = config.cluster.mode;
        clusters.labels = clustering::label_clusters(clusters);
        result.cohorts[c].clusters = clusters;
        clusterings.push_back(std::move(clusters));
    }

    if (clusterings.size() >= 2)
        result.consistency = clustering::match_clusterings(clusterings[0], clusterings[1]);

    std::vector<std::string> cohort_ids;
    for (const CohortArtifacts& artifacts : result.cohorts)
        cohort_ids.push_back(artifacts.cohort_id);
    for (const auto& [positive, negative] : config.inference.pairs)
        result.pairs.push_back(infer_pair(cohort_panels, cohort_ids, clusterings,
                                          manifest, config, positive, negative));
    return result;
}

void run_screen(const RunConfig& config) {
    const auto start = Clock::now();
    const LoadedInputs inputs = load_inputs(config);
    for (const ScorePanel& panel : inputs.subject_panels) {
        const screening::TestCorrelationMatrix matrix =
            screening::correlation_matrix(panel, config.screening);
        const screening::ScreeningOutcome outcome = screen_one(panel, matrix, config);
        if (!config.skip_screening)
            screening::validate_chain(outcome, matrix, config.screening);

        std::string report = screening::screening_report_json(outcome, matrix,
                                                              config.screening);
        if (config.skip_screening) {
            auto json = nlohmann::ordered_json::parse(report);
            json["skipped"] = true;
            report = json.dump(2) + "\n";
        }
        const std::filesystem::path dir = cohort_dir(config, panel.cohort_id);
        write_file(dir / "screening_report.json", report);
        write_file(dir / "correlations.csv", screening::correlations_csv(matrix));
        std::cerr << "[screen] " << panel.cohort_id << ": retained "
                  << outcome.retained.size() << "/" << panel.tests.size() << " tests\n";
    }
    std::cerr << "[screen] done in " << elapsed_ms(start) << " ms\n";
}

void run_cluster(const RunConfig& config) {
    const auto start = Clock::now();
    const LoadedInputs inputs = load_inputs(config);

    std::vector<ScorePanel> retained_views;
    for (const ScorePanel& panel : inputs.subject_panels) {
        ScorePanel view = panel;
        view.tests = read_retained(config, panel);
        retained_views.push_back(std::move(view));
    }
    std::vector<std::vector<TestKey>> per_cohort_common;
    if (retained_views.size() >= 2) {
        const std::vector<TestKey> common = intersect_common_tests(retained_views);
        for (const ScorePanel& view : retained_views) {
            std::vector<TestKey> keys;
            for (const TestKey& series : common)
                for (const TestKey& candidate : view.tests)
                    if (same_series(candidate, series)) keys.push_back(candidate);
            per_cohort_common.push_back(std::move(keys));
        }
    } else {
        per_cohort_common.push_back(retained_views[0].tests);
    }

    std::vector<clustering::Clustering> clusterings;
    for (size_t c = 0; c < inputs.subject_panels.size(); ++c) {
        const ScorePanel& panel = inputs.subject_panels[c];
        const std::vector<clustering::TrendVector> vectors =
            clustering::build_trend_vectors(panel, per_cohort_common[c],
                                            config.screening.score_kind,
                                            config.cluster.mode,
                                            config.cluster.sigma_zero_fallback);
        clustering::Clustering clusters = clustering::kmeans_restarts(
            vectors, config.cluster.k, config.cluster.seed, config.cluster.restarts);
        clusters.scale = config.cluster.mode;
        clusters.labels = clustering::label_clusters(clusters);

        const std::filesystem::path dir = cohort_dir(config, panel.cohort_id);
        write_file(dir / "clusters.csv", clustering::clusters_csv(clusters));
        write_file(dir / "centroids.csv",
                   clustering::centroids_csv(clusters, per_cohort_common[c]));
        write_file(dir / "centroid_trajectories.svg",
                   clustering::centroid_trajectories_svg(clusters, per_cohort_common[c]));
        std::cerr << "[cluster] " << panel.cohort_id << ": k=" << clusters.k
                  << " inertia=" << clusters.inertia << " iterations="
                  << clusters.iterations << "\n";
        clusterings.push_back(std::move(clusters));
    }

    if (clusterings.size() >= 2) {
        const clustering::ConsistencyReport report =
            clustering::match_clusterings(clusterings[0], clusterings[1]);
        std::vector<std::string> ids;
        for (const CohortInput& cohort : config.cohorts) ids.push_back(cohort.id);
        write_file(config.out_dir / "consistency.json",
                   clustering::consistency_report_json(report, ids));
        if (config.require_consistency &&
            report.verdict != clustering::ConsistencyReport::Verdict::consistent)
            throw validation_error(
                "cohort clusterings are inconsistent (label multisets differ)");
    }
    std::cerr << "[cluster] done in " << elapsed_ms(start) << " ms\n";
}

void run_infer(const RunConfig& config) {
    const auto start = Clock::now();
    if (config.inference.pairs.empty()) {
        std::cerr << "[infer] no cluster pairs configured, skipping\n";
        return;
    }
    if (config.inference.baseline_test_id.empty())
        throw input_error("inference requested but no baseline_test configured");

    const LoadedInputs inputs = load_inputs(config);
    std::vector<std::string> cohort_ids;
    std::vector<clustering::Clustering> clusterings;
    for (const CohortInput& cohort : config.cohorts) {
        cohort_ids.push_back(cohort.id);
        clusterings.push_back(read_clusters(config, cohort.id));
    }

    PipelineResult result;
    for (const auto& [positive, negative] : config.inference.pairs) {
        PipelineResult::PairResult pair =
            infer_pair(inputs.all_panels, cohort_ids, clusterings, inputs.manifest,
                       config, positive, negative);
        for (size_t c = 0; c < cohort_ids.size(); ++c) {
            const std::filesystem::path path =
                config.out_dir / ("regression_" + cohort_ids[c] + "_" +
                                  pair_slug(positive, negative) + ".csv");
            write_file(path, inference::regression_csv(pair.tiers[c].second,
                                                       pair.fits[c].second));
        }
        result.pairs.push_back(std::move(pair));
    }
    write_file(config.out_dir / "factors.json", factors_json(result, config).dump(2) + "\n");
    std::cerr << "[infer] done in " << elapsed_ms(start) << " ms\n";
}

void run_all(const RunConfig& config) {
    run_screen(config);
    run_cluster(config);
    run_infer(config);

    // Deterministic run manifest: config hash, seeds, input and output
    // digests. Wall-clock timings stay on stderr.
    ordered_json manifest;
    char hash_buf[17];
    std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a64(config_canonical_json(config))));
    manifest["config_hash"] = hash_buf;
    manifest["subject"] = to_string(config.subject);
    manifest["seed"] = config.cluster.seed;
    manifest["restarts"] = config.cluster.restarts;
    manifest["skip_screening"] = config.skip_screening;
    manifest["stages"] = {"screen", "cluster", "infer"};

    manifest["inputs"] = ordered_json::object();
    manifest["inputs"][config.manifest_csv.filename().string()] =
        file_digest(config.manifest_csv);
    for (const CohortInput& cohort : config.cohorts)
        manifest["inputs"][cohort.id + "/" + cohort.score_csv.filename().string()] =
            file_digest(cohort.score_csv);

    std::vector<std::filesystem::path> outputs;
    for (const auto& entry :
         std::filesystem::recursive_directory_iterator(config.out_dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().filename() == "run_manifest.json") continue;
        outputs.push_back(entry.path());
    }
    std::sort(outputs.begin(), outputs.end());
    manifest["outputs"] = ordered_json::object();
    for (const std::filesystem::path& path : outputs)
        manifest["outputs"][std::filesystem::relative(path, config.out_dir)
                                .generic_string()] = file_digest(path);

    write_file(config.out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

}  // namespace trendmine::pipeline
