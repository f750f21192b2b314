#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trendmine/archetype.hpp"
#include "trendmine/errors.hpp"

namespace trendmine {

struct Subject {
    enum class Kind { national_language, mathematics, other };
    Kind kind = Kind::other;
    std::string other_name;  // set when kind == other

    static Subject national_language() { return {Kind::national_language, {}}; }
    static Subject mathematics() { return {Kind::mathematics, {}}; }

    friend auto operator<=>(const Subject&, const Subject&) = default;
};

std::string to_string(const Subject& s);
Subject parse_subject(std::string_view text);

// Identity of one administered test. `id` is the opaque join key between the
// score table and the manifest; series identity across cohorts deliberately
// ignores `year` (a later cohort takes the same grade-test one year later).
struct TestKey {
    std::string id;
    std::string organization;
    Subject subject;
    int grade = 0;  // school year, 4-9
    std::optional<std::string> variant;
    int year = 0;
    int order_index = 0;  // chronological position within a cohort's chain

    friend bool operator==(const TestKey&, const TestKey&) = default;
};

// True when the two keys denote the same test series regardless of the
// calendar year they were administered in.
bool same_series(const TestKey& a, const TestKey& b);

struct ItemRecord {
    std::string item_id;
    std::string topic;
    int score = 0;  // binary {0,1}
};

struct Aggregate {
    std::optional<double> total_points;
    double correct_ratio = 0.0;
};

enum class ScoreKind { correct_ratio, total_points };

std::string to_string(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view text);

// Complete longitudinal panel for one (cohort, subject): every retained
// student has a full item record for every test in `tests`.
struct ScorePanel {
    std::string cohort_id;
    Subject subject;
    std::vector<TestKey> tests;  // chronological (by order_index)
    std::vector<std::string> students;
    // Indexed [student][test], aligned with `students` and `tests`.
    std::vector<std::vector<std::vector<ItemRecord>>> item_scores;
    std::vector<std::vector<Aggregate>> aggregates;

    size_t student_index(std::string_view student_id) const;
    size_t test_index(const std::string& test_id) const;
    double aggregate_value(size_t student, size_t test, ScoreKind kind) const;
};

// Known generating process of a synthetic panel; empty for real data.
struct GroundTruth {
    std::map<std::string, ArchetypeLabel> archetype;
    std::vector<TestKey> shifted_tests;
    std::vector<std::pair<std::string, double>> causal_items;  // item_id, log-odds
};

struct ManifestEntry {
    TestKey test;
    std::vector<std::pair<std::string, std::string>> items;  // (item_id, topic) in file order
};

struct Manifest {
    std::vector<ManifestEntry> tests;  // first-appearance order

    const ManifestEntry* find(const std::string& test_id) const;
    const ManifestEntry& at(const std::string& test_id) const;
};

// Manifest CSV: test_id,organization,subject,grade,variant,year,order_index,item_id,topic
Manifest parse_test_manifest(std::string_view csv_text);

struct ParsedPanel {
    ScorePanel panel;
    std::vector<std::string> warnings;  // one entry per dropped student
};

// Score CSV (long format): cohort_id,student_id,test_id,item_id,score.
// The text must contain exactly one (cohort, subject); use
// parse_score_panels for mixed files.
ParsedPanel parse_score_table(std::string_view csv_text, const Manifest& manifest);

// Splits a mixed score CSV by (cohort, subject) and parses each slice.
std::vector<ParsedPanel> parse_score_panels(std::string_view csv_text,
                                            const Manifest& manifest);

// Inverse of parse_score_table, byte-deterministic.
std::string panel_to_csv(const ScorePanel& panel);
std::string manifest_to_csv(const Manifest& manifest);

// Tests (by series identity) present in every panel, in the first panel's
// chronological order, returned as the first panel's keys.
std::vector<TestKey> intersect_common_tests(const std::vector<ScorePanel>& panels);

}  // namespace trendmine
