#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trendmine/pipeline.hpp"
#include "trendmine/synth.hpp"

namespace fs = std::filesystem;
using namespace trendmine;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot read file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot write file: " + path.string());
    out << content;
}

// One spec may describe several cohorts (shared recipe, per-cohort seeds).
struct SimulatePlan {
    std::vector<synth::SynthSpec> cohorts;
};

SimulatePlan simulate_plan(const fs::path& spec_path, std::optional<uint64_t> seed) {
    const auto parsed = nlohmann::json::parse(read_file(spec_path), nullptr, true, true);
    synth::SynthSpec base = synth::spec_from_json(parsed.dump());
    if (seed) base.seed = *seed;

    SimulatePlan plan;
    if (parsed.contains("cohorts")) {
        for (const auto& entry : parsed["cohorts"]) {
            synth::SynthSpec spec = base;
            if (entry.contains("cohort_id"))
                spec.cohort_id = entry["cohort_id"].get<std::string>();
            if (entry.contains("seed")) spec.seed = entry["seed"].get<uint64_t>();
            plan.cohorts.push_back(std::move(spec));
        }
        if (plan.cohorts.empty())
            throw input_error("simulate spec has an empty cohorts array");
    } else {
        plan.cohorts.push_back(std::move(base));
    }
    return plan;
}

int run_simulate(const fs::path& spec_path, const fs::path& out_dir,
                 std::optional<uint64_t> seed) {
    const SimulatePlan plan = simulate_plan(spec_path, seed);

    Manifest merged;
    for (const synth::SynthSpec& spec : plan.cohorts) {
        const synth::SynthCohort cohort = synth::generate_cohort(spec);
        synth::emit_truth(cohort, out_dir / spec.cohort_id);
        const Manifest manifest = synth::cohort_manifest(cohort);
        for (const ManifestEntry& entry : manifest.tests) {
            const ManifestEntry* existing = merged.find(entry.test.id);
            if (!existing) {
                merged.tests.push_back(entry);
            } else if (!(existing->test == entry.test) ||
                       existing->items != entry.items) {
                throw input_error("cohorts disagree on test '" + entry.test.id + "'");
            }
        }
        std::cerr << "[simulate] " << spec.cohort_id << ": " << spec.n_students
                  << " students, " << spec.n_tests << " tests, seed " << spec.seed
                  << "\n";
    }
    write_file(out_dir / "manifest.csv", manifest_to_csv(merged));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Longitudinal achievement analytics: coherence screening, "
                 "trajectory clustering, and cross-subject factor extraction"};
    app.require_subcommand(1);

    std::string spec_path, config_path, out_override;
    std::optional<uint64_t> seed_override;
    bool skip_screening = false;
    bool require_consistency = false;

    auto* simulate = app.add_subcommand("simulate", "Generate synthetic cohorts");
    simulate->add_option("--spec", spec_path, "Synthetic cohort spec (JSON)")->required();
    simulate->add_option("--out", out_override, "Output directory")->required();
    simulate->add_option("--seed", seed_override, "Override the spec seed");

    auto add_pipeline_options = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
        cmd->add_option("--out", out_override, "Override the output directory");
        cmd->add_option("--seed", seed_override, "Override the clustering seed");
        cmd->add_flag("--skip-screening", skip_screening,
                      "Retain the full test chain (no exclusion)");
        cmd->add_flag("--require-consistency", require_consistency,
                      "Fail when cohort clusterings disagree");
    };
    auto* screen = app.add_subcommand("screen", "Coherence screening per cohort");
    auto* cluster = app.add_subcommand("cluster", "Trend-vector k-means per cohort");
    auto* infer = app.add_subcommand("infer", "Cluster-contrast logistic regressions");
    auto* run_all_cmd = app.add_subcommand("run-all", "Full pipeline plus run manifest");
    for (CLI::App* cmd : {screen, cluster, infer, run_all_cmd}) add_pipeline_options(cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed())
            return run_simulate(spec_path, out_override, seed_override);

        pipeline::RunConfig config = pipeline::load_config(config_path);
        if (!out_override.empty()) config.out_dir = out_override;
        if (seed_override) config.cluster.seed = *seed_override;
        if (skip_screening) config.skip_screening = true;
        if (require_consistency) config.require_consistency = true;

        if (screen->parsed()) pipeline::run_screen(config);
        else if (cluster->parsed()) pipeline::run_cluster(config);
        else if (infer->parsed()) pipeline::run_infer(config);
        else pipeline::run_all(config);
        return 0;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
