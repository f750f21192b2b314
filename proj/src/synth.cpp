#include "trendmine/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "trendmine/rng.hpp"

namespace trendmine::synth {

namespace {

using ordered_json = nlohmann::ordered_json;
constexpr double kChainItemSlope = 6.0;      // latent units per logit, chain tests
constexpr double kEvidenceItemSlope = 18.0;  // evidence items measure the trend
                                             // subject's latent only loosely
constexpr double kEvidenceCrossNoiseSd = 4.0;  // evidence subject's own ability
                                               // component, independent per student
constexpr double kDifficultyLow = 35.0;  // easiest item, latent scale
constexpr double kDifficultyHigh = 65.0;
constexpr double kShiftDifficultyOffset = 8.0;  // shifted tests run harder
constexpr double kPopulationMean = 47.0;        // independent ability for shifts
constexpr double kPopulationSd = 10.0;
// Share of the noise variance that persists across a student's whole
// trajectory; the rest is drawn independently per test. The marginal
// per-test noise stays N(0, noise_sd^2).
constexpr double kPersistentNoiseShare = 0.8;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool ends_high(const ArchetypeLabel& label) {
    return label.kind == ArchetypeLabel::Kind::stay_high_stably ||
           label.kind == ArchetypeLabel::Kind::increase_from_low;
}

// Three-point anchors on the deviation scale, matched to the magnitudes the
// labeling rule is calibrated against.
std::array<double, 3> anchors(const ArchetypeLabel& label) {
    switch (label.kind) {
        case ArchetypeLabel::Kind::stay_high_stably: return {58.0, 59.0, 60.0};
        case ArchetypeLabel::Kind::stay_low_stably: return {33.0, 35.0, 38.0};
        case ArchetypeLabel::Kind::increase_from_low: return {44.0, 46.0, 53.0};
        case ArchetypeLabel::Kind::decrease_from_high: return {52.0, 51.0, 46.0};
        case ArchetypeLabel::Kind::other: break;
    }
    return {50.0, 50.0, 50.0};
}

std::string item_id_of(const std::string& test_id, int k) {
    return test_id + "-" + std::to_string(k + 1);
}

}  // namespace

SynthSpec SynthSpec::defaults() {
    SynthSpec spec;
    spec.archetype_mix = {{ArchetypeLabel::stay_high(), 0.25},
                          {ArchetypeLabel::stay_low(), 0.25},
                          {ArchetypeLabel::increase(), 0.25},
                          {ArchetypeLabel::decrease(), 0.25}};
    return spec;
}

std::vector<double> archetype_template(const ArchetypeLabel& label, int n_tests) {
    const std::array<double, 3> a = anchors(label);
    std::vector<double> out(static_cast<size_t>(n_tests));
    if (n_tests == 1) {
        out[0] = a[1];
        return out;
    }
    for (int t = 0; t < n_tests; ++t) {
        const double pos = 2.0 * static_cast<double>(t) / static_cast<double>(n_tests - 1);
        if (pos <= 1.0)
            out[static_cast<size_t>(t)] = a[0] + (a[1] - a[0]) * pos;
        else
            out[static_cast<size_t>(t)] = a[1] + (a[2] - a[1]) * (pos - 1.0);
    }
    return out;
}

SynthCohort generate_cohort(const SynthSpec& spec) {
    if (spec.n_students < 2) throw input_error("n_students must be at least 2");
    if (spec.n_tests < 1) throw input_error("n_tests must be at least 1");
    if (spec.items_per_test < 1) throw input_error("items_per_test must be at least 1");

    double mass = 0.0;
    int mixed = 0;
    for (const auto& [label, fraction] : spec.archetype_mix) {
        if (fraction < 0.0) throw input_error("archetype fractions must be non-negative");
        mass += fraction;
        if (fraction > 0.0) ++mixed;
    }
    if (std::fabs(mass - 1.0) > 1e-9)
        throw input_error("archetype fractions must sum to 1");
    if (spec.n_students < 4 * mixed)
        throw input_error("n_students must be at least 4 per mixed archetype");
    for (int pos : spec.shift_positions)
        if (pos < 0 || pos >= spec.n_tests)
            throw input_error("shift position out of range: " + std::to_string(pos));
    if (spec.evidence_items < 1)
        throw input_error("evidence_items must be at least 1");
    for (const auto& [item, effect] : spec.causal_items)
        if (item < 0 || item >= spec.evidence_items)
            throw input_error("causal item index out of range: " + std::to_string(item));

    // Test chain metadata. Grades past 9 fold into grade-9 variants, the way
    // paired end-of-chain tests appear in real chains.
    std::vector<TestKey> tests(static_cast<size_t>(spec.n_tests));
    for (int t = 0; t < spec.n_tests; ++t) {
        TestKey& key = tests[static_cast<size_t>(t)];
        const int raw_grade = spec.first_grade + t;
        key.grade = std::min(raw_grade, 9);
        if (raw_grade > 9) key.variant = std::string(1, static_cast<char>('A' + raw_grade - 9));
        const char subject_letter = spec.subject == Subject::mathematics() ? 'm' : 'l';
        key.id = "g" + std::to_string(key.grade) + subject_letter +
                 (key.variant ? *key.variant : "");
        key.organization = spec.organization;
        key.subject = spec.subject;
        key.year = spec.first_year + t;
        key.order_index = t;
    }

    Rng rng(spec.seed);

    // Archetypes per student by cumulative mix.
    std::vector<ArchetypeLabel> draw_order;
    for (const auto& [label, fraction] : spec.archetype_mix)
        if (fraction > 0.0) draw_order.push_back(label);

    SynthCohort cohort;
    ScorePanel& panel = cohort.panel;
    panel.cohort_id = spec.cohort_id;
    panel.subject = spec.subject;
    panel.tests = tests;

    std::map<ArchetypeLabel, int> counts;
    std::vector<ArchetypeLabel> archetypes(static_cast<size_t>(spec.n_students));
    const int id_width =
        static_cast<int>(std::to_string(spec.n_students).size());
    for (int s = 0; s < spec.n_students; ++s) {
        const double u = rng.uniform01();
        double cum = 0.0;
        ArchetypeLabel chosen = draw_order.back();
        for (const ArchetypeLabel& label : draw_order) {
            cum += spec.archetype_mix.at(label);
            if (u < cum) {
                chosen = label;
                break;
            }
        }
        archetypes[static_cast<size_t>(s)] = chosen;
        ++counts[chosen];

        std::string num = std::to_string(s + 1);
        num.insert(0, static_cast<size_t>(id_width) - num.size(), '0');
        panel.students.push_back(spec.cohort_id + "-s" + num);
    }
    for (const auto& [label, count] : counts)
        if (count < 2)
            throw input_error("infeasible archetype mix: " + to_string(label) +
                              " drew fewer than 2 students");

    std::map<int, double> causal_effect;
    for (const auto& [item, effect] : spec.causal_items) causal_effect[item] = effect;

    // Evidence test from the other subject at the chain's starting point.
    TestKey evidence_key;
    evidence_key.grade = spec.first_grade;
    evidence_key.id =
        "g" + std::to_string(evidence_key.grade) +
        (spec.evidence_subject == Subject::mathematics() ? "m" : "l");
    evidence_key.organization = spec.organization;
    evidence_key.subject = spec.evidence_subject;
    evidence_key.year = spec.first_year;
    evidence_key.order_index = 0;

    ScorePanel& evidence = cohort.evidence_panel;
    evidence.cohort_id = spec.cohort_id;
    evidence.subject = spec.evidence_subject;
    evidence.tests = {evidence_key};
    evidence.students = panel.students;

    auto make_items = [&](const TestKey& test, double latent, double slope,
                          double difficulty_offset, const ArchetypeLabel& label,
                          bool causal, int item_count) {
        std::vector<ItemRecord> records;
        records.reserve(static_cast<size_t>(item_count));
        int total = 0;
        for (int k = 0; k < item_count; ++k) {
            const double difficulty =
                kDifficultyLow + (kDifficultyHigh - kDifficultyLow) *
                                     (static_cast<double>(k) + 0.5) /
                                         static_cast<double>(item_count) +
                difficulty_offset;
            double logit = (latent - difficulty) / slope;
            if (causal) {
                const auto it = causal_effect.find(k);
                if (it != causal_effect.end() && ends_high(label))
                    logit += it->second;
            }
            const int score = rng.bernoulli(sigmoid(logit)) ? 1 : 0;
            total += score;
            records.push_back(
                {item_id_of(test.id, k), "skill " + item_id_of(test.id, k), score});
        }
        Aggregate agg;
        agg.correct_ratio =
            static_cast<double>(total) / static_cast<double>(item_count);
        return std::make_pair(std::move(records), agg);
    };

    panel.item_scores.resize(panel.students.size());
    panel.aggregates.resize(panel.students.size());
    evidence.item_scores.resize(panel.students.size());
    evidence.aggregates.resize(panel.students.size());
    const double persistent_sd = spec.noise_sd * std::sqrt(kPersistentNoiseShare);
    const double per_test_sd = spec.noise_sd * std::sqrt(1.0 - kPersistentNoiseShare);
    for (int s = 0; s < spec.n_students; ++s) {
        const ArchetypeLabel& label = archetypes[static_cast<size_t>(s)];
        const std::vector<double> trajectory =
            archetype_template(label, spec.n_tests);
        const double student_offset = rng.normal(0.0, persistent_sd);
        auto& per_test_items = panel.item_scores[static_cast<size_t>(s)];
        auto& per_test_aggs = panel.aggregates[static_cast<size_t>(s)];
        per_test_items.resize(tests.size());
        per_test_aggs.resize(tests.size());

        for (int t = 0; t < spec.n_tests; ++t) {
            const bool shifted = spec.shift_positions.count(t) > 0;
            // Shifted tests score an independent ability, severing the
            // cross-test correlation.
            const double latent =
                shifted ? rng.normal(kPopulationMean, kPopulationSd)
                        : trajectory[static_cast<size_t>(t)] + student_offset +
                              rng.normal(0.0, per_test_sd);
            auto [records, agg] = make_items(
                tests[static_cast<size_t>(t)], latent, kChainItemSlope,
                shifted ? kShiftDifficultyOffset : 0.0, label, false,
                spec.items_per_test);
            per_test_items[static_cast<size_t>(t)] = std::move(records);
            per_test_aggs[static_cast<size_t>(t)] = agg;
        }

        // the evidence subject's ability tracks the trend subject's only
        // imperfectly
        const double evidence_latent = trajectory[0] + student_offset +
                                       rng.normal(0.0, per_test_sd) +
                                       rng.normal(0.0, kEvidenceCrossNoiseSd);
        auto [records, agg] =
            make_items(evidence_key, evidence_latent, kEvidenceItemSlope, 0.0, label,
                       true, spec.evidence_items);
        evidence.item_scores[static_cast<size_t>(s)] = {std::move(records)};
        evidence.aggregates[static_cast<size_t>(s)] = {agg};
    }

    GroundTruth& truth = cohort.truth;
    for (size_t s = 0; s < panel.students.size(); ++s)
        truth.archetype[panel.students[s]] = archetypes[s];
    for (int pos : spec.shift_positions)
        truth.shifted_tests.push_back(tests[static_cast<size_t>(pos)]);
    for (const auto& [item, effect] : spec.causal_items)
        truth.causal_items.emplace_back(item_id_of(evidence_key.id, item), effect);
    return cohort;
}

Manifest cohort_manifest(const SynthCohort& cohort) {
    Manifest manifest;
    auto append = [&](const ScorePanel& panel) {
        for (size_t t = 0; t < panel.tests.size(); ++t) {
            ManifestEntry entry;
            entry.test = panel.tests[t];
            for (const ItemRecord& record : panel.item_scores[0][t])
                entry.items.emplace_back(record.item_id, record.topic);
            manifest.tests.push_back(std::move(entry));
        }
    };
    append(cohort.panel);
    append(cohort.evidence_panel);
    return manifest;
}

std::string truth_json(const SynthCohort& cohort) {
    ordered_json out;
    out["cohort_id"] = cohort.panel.cohort_id;
    out["archetype"] = ordered_json::object();
    for (const auto& [student, label] : cohort.truth.archetype)
        out["archetype"][student] = to_string(label);
    out["shifted_tests"] = ordered_json::array();
    for (const TestKey& key : cohort.truth.shifted_tests)
        out["shifted_tests"].push_back(key.id);
    out["causal_items"] = ordered_json::array();
    for (const auto& [item, effect] : cohort.truth.causal_items)
        out["causal_items"].push_back({{"item_id", item}, {"effect", effect}});
    return out.dump(2) + "\n";
}

void emit_truth(const SynthCohort& cohort, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write = [&](const std::filesystem::path& name, const std::string& content) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw input_error("cannot write " + (dir / name).string());
        out << content;
    };
    // one score file carries both subjects; the parser splits them
    std::string scores = panel_to_csv(cohort.panel);
    const std::string evidence = panel_to_csv(cohort.evidence_panel);
    scores += evidence.substr(evidence.find('\n') + 1);
    write("score.csv", scores);
    write("manifest.csv", manifest_to_csv(cohort_manifest(cohort)));
    write("truth.json", truth_json(cohort));
}

SynthSpec spec_from_json(const std::string& json_text) {
    const auto parsed = nlohmann::json::parse(json_text, nullptr, true, true);
    SynthSpec spec = SynthSpec::defaults();
    if (parsed.contains("n_students")) spec.n_students = parsed["n_students"].get<int>();
    if (parsed.contains("n_tests")) spec.n_tests = parsed["n_tests"].get<int>();
    if (parsed.contains("items_per_test"))
        spec.items_per_test = parsed["items_per_test"].get<int>();
    if (parsed.contains("archetype_mix")) {
        spec.archetype_mix.clear();
        for (const auto& [key, value] : parsed["archetype_mix"].items())
            spec.archetype_mix[parse_archetype(key)] = value.get<double>();
    }
    if (parsed.contains("shift_positions")) {
        spec.shift_positions.clear();
        for (const auto& value : parsed["shift_positions"])
            spec.shift_positions.insert(value.get<int>());
    }
    if (parsed.contains("noise_sd")) spec.noise_sd = parsed["noise_sd"].get<double>();
    if (parsed.contains("causal_items")) {
        spec.causal_items.clear();
        for (const auto& value : parsed["causal_items"])
            spec.causal_items.emplace_back(value.at(0).get<int>(),
                                           value.at(1).get<double>());
    }
    if (parsed.contains("evidence_items"))
        spec.evidence_items = parsed["evidence_items"].get<int>();
    if (parsed.contains("seed")) spec.seed = parsed["seed"].get<uint64_t>();
    if (parsed.contains("cohort_id")) spec.cohort_id = parsed["cohort_id"].get<std::string>();
    if (parsed.contains("subject"))
        spec.subject = parse_subject(parsed["subject"].get<std::string>());
    if (parsed.contains("organization"))
        spec.organization = parsed["organization"].get<std::string>();
    if (parsed.contains("first_grade")) spec.first_grade = parsed["first_grade"].get<int>();
    if (parsed.contains("first_year")) spec.first_year = parsed["first_year"].get<int>();
    return spec;
}

std::string spec_to_json(const SynthSpec& spec) {
    ordered_json out;
    out["n_students"] = spec.n_students;
    out["n_tests"] = spec.n_tests;
    out["items_per_test"] = spec.items_per_test;
    out["archetype_mix"] = ordered_json::object();
    for (const auto& [label, fraction] : spec.archetype_mix)
        out["archetype_mix"][to_string(label)] = fraction;
    out["shift_positions"] = spec.shift_positions;
    out["noise_sd"] = spec.noise_sd;
    out["causal_items"] = ordered_json::array();
    for (const auto& [item, effect] : spec.causal_items)
        out["causal_items"].push_back({item, effect});
    out["evidence_items"] = spec.evidence_items;
    out["seed"] = spec.seed;
    out["cohort_id"] = spec.cohort_id;
    out["subject"] = to_string(spec.subject);
    out["organization"] = spec.organization;
    out["first_grade"] = spec.first_grade;
    out["first_year"] = spec.first_year;
    return out.dump(2) + "\n";
}

}  // namespace trendmine::synth
