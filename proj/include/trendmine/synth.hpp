#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "trendmine/archetype.hpp"
#include "trendmine/data_model.hpp"

namespace trendmine::synth {

// Recipe for one synthetic cohort with known ground truth: planted
// trajectory archetypes, criterion-shifted chain tests, and causal items on
// a cross-subject evidence test taken at the chain's starting point.
struct SynthSpec {
    int n_students = 200;
    int n_tests = 5;  // trend-subject chain length
    int items_per_test = 32;
    std::map<ArchetypeLabel, double> archetype_mix;  // fractions summing to 1
    std::set<int> shift_positions;                   // 0-based chain indices
    double noise_sd = 3.0;                           // on the latent score scale
    // (item index within the evidence test, log-odds tilt applied to
    // students whose archetype ends high)
    std::vector<std::pair<int, double>> causal_items;
    int evidence_items = 20;
    uint64_t seed = 1;

    std::string cohort_id = "cohort1";
    Subject subject = Subject::mathematics();
    Subject evidence_subject = Subject::national_language();
    std::string organization = "synth";
    int first_grade = 4;
    int first_year = 2020;

    static SynthSpec defaults();
};

struct SynthCohort {
    ScorePanel panel;           // the trend-subject chain
    ScorePanel evidence_panel;  // single evidence test, other subject
    GroundTruth truth;
};

SynthCohort generate_cohort(const SynthSpec& spec);

// Noiseless archetype template across n_tests positions (deviation scale).
std::vector<double> archetype_template(const ArchetypeLabel& label, int n_tests);

// Writes score.csv (chain plus evidence test) and truth.json into `dir`,
// plus manifest.csv covering every test.
void emit_truth(const SynthCohort& cohort, const std::filesystem::path& dir);

std::string truth_json(const SynthCohort& cohort);
Manifest cohort_manifest(const SynthCohort& cohort);

SynthSpec spec_from_json(const std::string& json_text);
std::string spec_to_json(const SynthSpec& spec);

}  // namespace trendmine::synth
