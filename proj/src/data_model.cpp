#include "trendmine/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "trendmine/csv.hpp"

namespace trendmine {

namespace {

int parse_int(const std::string& text, size_t line, const char* what) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw input_error("line " + std::to_string(line) + ": bad " + what + " '" +
                          text + "'");
    return value;
}

std::string line_prefix(size_t line) { return "line " + std::to_string(line) + ": "; }

}  // namespace

std::string to_string(const Subject& s) {
    switch (s.kind) {
        case Subject::Kind::national_language: return "national_language";
        case Subject::Kind::mathematics: return "mathematics";
        case Subject::Kind::other: return s.other_name;
    }
    return {};
}

Subject parse_subject(std::string_view text) {
    if (text == "national_language") return Subject::national_language();
    if (text == "mathematics") return Subject::mathematics();
    return Subject{Subject::Kind::other, std::string(text)};
}

std::string to_string(ScoreKind kind) {
    return kind == ScoreKind::correct_ratio ? "correct_ratio" : "total_points";
}

ScoreKind parse_score_kind(std::string_view text) {
    if (text == "correct_ratio") return ScoreKind::correct_ratio;
    if (text == "total_points") return ScoreKind::total_points;
    throw input_error("unknown score kind: " + std::string(text));
}

bool same_series(const TestKey& a, const TestKey& b) {
    return a.organization == b.organization && a.subject == b.subject &&
           a.grade == b.grade && a.variant == b.variant;
}

size_t ScorePanel::student_index(std::string_view student_id) const {
    for (size_t i = 0; i < students.size(); ++i)
        if (students[i] == student_id) return i;
    throw input_error("student not in panel: " + std::string(student_id));
}

size_t ScorePanel::test_index(const std::string& test_id) const {
    for (size_t i = 0; i < tests.size(); ++i)
        if (tests[i].id == test_id) return i;
    throw input_error("test not in panel: " + test_id);
}

double ScorePanel::aggregate_value(size_t student, size_t test, ScoreKind kind) const {
    const Aggregate& agg = aggregates[student][test];
    if (kind == ScoreKind::correct_ratio) return agg.correct_ratio;
    if (!agg.total_points)
        throw input_error("total_points requested but absent for student '" +
                          students[student] + "' on test '" + tests[test].id + "'");
    return *agg.total_points;
}

const ManifestEntry* Manifest::find(const std::string& test_id) const {
    for (const auto& entry : tests)
        if (entry.test.id == test_id) return &entry;
    return nullptr;
}

const ManifestEntry& Manifest::at(const std::string& test_id) const {
    const ManifestEntry* entry = find(test_id);
    if (!entry) throw input_error("test id not in manifest: " + test_id);
    return *entry;
}

Manifest parse_test_manifest(std::string_view csv_text) {
    const auto rows = csv::parse(csv_text);
    if (rows.empty()) throw input_error("manifest CSV is empty");
    const std::vector<std::string> header = {"test_id", "organization", "subject",
                                             "grade",   "variant",      "year",
                                             "order_index", "item_id",  "topic"};
    if (rows[0].fields != header)
        throw input_error("manifest CSV header mismatch, expected " +
                          csv::join_row(header));

    Manifest manifest;
    std::set<std::pair<std::string, std::string>> seen_items;
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.fields.size() != header.size())
            throw input_error(line_prefix(row.line_number) + "expected " +
                              std::to_string(header.size()) + " columns, got " +
                              std::to_string(row.fields.size()));
        TestKey key;
        key.id = row.fields[0];
        key.organization = row.fields[1];
        key.subject = parse_subject(row.fields[2]);
        key.grade = parse_int(row.fields[3], row.line_number, "grade");
        if (key.grade < 4 || key.grade > 9)
            throw input_error(line_prefix(row.line_number) + "grade out of range 4-9: " +
                              row.fields[3]);
        if (!row.fields[4].empty()) key.variant = row.fields[4];
        key.year = parse_int(row.fields[5], row.line_number, "year");
        key.order_index = parse_int(row.fields[6], row.line_number, "order_index");
        const std::string& item_id = row.fields[7];
        const std::string& topic = row.fields[8];
        if (topic.empty())
            throw input_error(line_prefix(row.line_number) + "empty topic for item '" +
                              item_id + "'");
        if (!seen_items.insert({key.id, item_id}).second)
            throw input_error(line_prefix(row.line_number) + "duplicate item '" +
                              item_id + "' for test '" + key.id + "'");

        ManifestEntry* entry = nullptr;
        for (auto& e : manifest.tests)
            if (e.test.id == key.id) entry = &e;
        if (entry) {
            if (!(entry->test == key))
                throw input_error(line_prefix(row.line_number) +
                                  "inconsistent metadata for test '" + key.id + "'");
        } else {
            manifest.tests.push_back({key, {}});
            entry = &manifest.tests.back();
        }
        entry->items.emplace_back(item_id, topic);
    }
    return manifest;
}

namespace {

struct ScoreRow {
    std::string cohort;
    std::string student;
    std::string test;
    std::string item;
    int score;
    size_t line;
};

std::vector<ScoreRow> parse_score_rows(std::string_view csv_text, const Manifest& manifest) {
    const auto rows = csv::parse(csv_text);
    if (rows.empty()) throw input_error("score CSV is empty");
    const std::vector<std::string> header = {"cohort_id", "student_id", "test_id",
                                             "item_id", "score"};
    if (rows[0].fields != header)
        throw input_error("score CSV header mismatch, expected " + csv::join_row(header));

    std::vector<ScoreRow> out;
    out.reserve(rows.size() - 1);
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.fields.size() != header.size())
            throw input_error(line_prefix(row.line_number) + "expected " +
                              std::to_string(header.size()) + " columns, got " +
                              std::to_string(row.fields.size()));
        const std::string& score_text = row.fields[4];
        if (score_text != "0" && score_text != "1")
            throw input_error(line_prefix(row.line_number) + "score must be 0 or 1, got '" +
                              score_text + "'");
        const ManifestEntry* entry = manifest.find(row.fields[2]);
        if (!entry)
            throw input_error(line_prefix(row.line_number) + "test id '" + row.fields[2] +
                              "' not in manifest");
        const bool known_item =
            std::any_of(entry->items.begin(), entry->items.end(),
                        [&](const auto& it) { return it.first == row.fields[3]; });
        if (!known_item)
            throw input_error(line_prefix(row.line_number) + "item id '" + row.fields[3] +
                              "' not in manifest for test '" + row.fields[2] + "'");
        out.push_back({row.fields[0], row.fields[1], row.fields[2], row.fields[3],
                       score_text == "1" ? 1 : 0, row.line_number});
    }
    return out;
}

ParsedPanel assemble_panel(const std::string& cohort_id, const Subject& subject,
                           const std::vector<const ScoreRow*>& rows,
                           const Manifest& manifest) {
    // Tests present in this slice, chronological.
    std::vector<TestKey> tests;
    for (const ScoreRow* row : rows) {
        const TestKey& key = manifest.at(row->test).test;
        if (std::none_of(tests.begin(), tests.end(),
                         [&](const TestKey& t) { return t.id == key.id; }))
            tests.push_back(key);
    }
    std::sort(tests.begin(), tests.end(),
              [](const TestKey& a, const TestKey& b) { return a.order_index < b.order_index; });
    for (size_t i = 1; i < tests.size(); ++i) {
        if (tests[i].order_index == tests[i - 1].order_index)
            throw input_error("cohort '" + cohort_id + "': duplicate order_index " +
                              std::to_string(tests[i].order_index) + " within subject " +
                              to_string(subject));
        if (tests[i].grade < tests[i - 1].grade || tests[i].year < tests[i - 1].year)
            throw input_error("cohort '" + cohort_id + "': grade/year not non-decreasing "
                              "along order_index at test '" + tests[i].id + "'");
    }

    // Students in first-appearance order.
    std::vector<std::string> student_order;
    for (const ScoreRow* row : rows)
        if (std::find(student_order.begin(), student_order.end(), row->student) ==
            student_order.end())
            student_order.push_back(row->student);

    // (student, test, item) -> score, duplicate rows rejected.
    std::map<std::tuple<std::string, std::string, std::string>, int> cell;
    for (const ScoreRow* row : rows) {
        const auto key = std::make_tuple(row->student, row->test, row->item);
        if (!cell.emplace(key, row->score).second)
            throw input_error(line_prefix(row->line) + "duplicate score row for student '" +
                              row->student + "', test '" + row->test + "', item '" +
                              row->item + "'");
    }

    ParsedPanel result;
    ScorePanel& panel = result.panel;
    panel.cohort_id = cohort_id;
    panel.subject = subject;
    panel.tests = tests;

    for (const std::string& student : student_order) {
        std::vector<std::vector<ItemRecord>> per_test;
        std::vector<Aggregate> per_test_agg;
        std::string missing;
        for (const TestKey& test : tests) {
            const ManifestEntry& entry = manifest.at(test.id);
            std::vector<ItemRecord> records;
            records.reserve(entry.items.size());
            int total = 0;
            bool complete = true;
            for (const auto& [item_id, topic] : entry.items) {
                auto it = cell.find(std::make_tuple(student, test.id, item_id));
                if (it == cell.end()) {
                    complete = false;
                    break;
                }
                records.push_back({item_id, topic, it->second});
                total += it->second;
            }
            if (!complete) {
                missing = test.id;
                break;
            }
            Aggregate agg;
            agg.correct_ratio =
                static_cast<double>(total) / static_cast<double>(entry.items.size());
            per_test_agg.push_back(agg);
            per_test.push_back(std::move(records));
        }
        if (!missing.empty()) {
            result.warnings.push_back("student '" + student +
                                      "' dropped: incomplete record for test '" +
                                      missing + "'");
            continue;
        }
        panel.students.push_back(student);
        panel.item_scores.push_back(std::move(per_test));
        panel.aggregates.push_back(std::move(per_test_agg));
    }

    if (panel.students.empty())
        throw input_error("cohort '" + cohort_id + "' (" + to_string(subject) +
                          "): no student has a complete record for every test");
    return result;
}

}  // namespace

std::vector<ParsedPanel> parse_score_panels(std::string_view csv_text,
                                            const Manifest& manifest) {
    const std::vector<ScoreRow> rows = parse_score_rows(csv_text, manifest);
    if (rows.empty()) throw input_error("score CSV has no data rows");

    // Group by (cohort, subject) in first-appearance order.
    std::vector<std::pair<std::string, Subject>> groups;
    std::vector<std::vector<const ScoreRow*>> members;
    for (const ScoreRow& row : rows) {
        const Subject subject = manifest.at(row.test).test.subject;
        const std::pair<std::string, Subject> key{row.cohort, subject};
        size_t g = groups.size();
        for (size_t i = 0; i < groups.size(); ++i)
            if (groups[i] == key) g = i;
        if (g == groups.size()) {
            groups.push_back(key);
            members.emplace_back();
        }
        members[g].push_back(&row);
    }

    std::vector<ParsedPanel> panels;
    panels.reserve(groups.size());
    for (size_t g = 0; g < groups.size(); ++g)
        panels.push_back(assemble_panel(groups[g].first, groups[g].second, members[g],
                                        manifest));
    return panels;
}

ParsedPanel parse_score_table(std::string_view csv_text, const Manifest& manifest) {
    std::vector<ParsedPanel> panels = parse_score_panels(csv_text, manifest);
    if (panels.size() != 1)
        throw input_error("score CSV contains " + std::to_string(panels.size()) +
                          " (cohort, subject) series, expected exactly one");
    return std::move(panels.front());
}

std::string panel_to_csv(const ScorePanel& panel) {
    std::string out = "cohort_id,student_id,test_id,item_id,score\n";
    for (size_t s = 0; s < panel.students.size(); ++s) {
        for (size_t t = 0; t < panel.tests.size(); ++t) {
            for (const ItemRecord& record : panel.item_scores[s][t]) {
                out += csv::join_row({panel.cohort_id, panel.students[s],
                                      panel.tests[t].id, record.item_id,
                                      record.score ? "1" : "0"});
            }
        }
    }
    return out;
}

std::string manifest_to_csv(const Manifest& manifest) {
    std::string out =
        "test_id,organization,subject,grade,variant,year,order_index,item_id,topic\n";
    for (const ManifestEntry& entry : manifest.tests) {
        for (const auto& [item_id, topic] : entry.items) {
            out += csv::join_row({entry.test.id, entry.test.organization,
                                  to_string(entry.test.subject),
                                  std::to_string(entry.test.grade),
                                  entry.test.variant.value_or(""),
                                  std::to_string(entry.test.year),
                                  std::to_string(entry.test.order_index), item_id, topic});
        }
    }
    return out;
}

std::vector<TestKey> intersect_common_tests(const std::vector<ScorePanel>& panels) {
    if (panels.size() < 2)
        throw input_error("common-test intersection needs at least two panels");
    for (size_t i = 1; i < panels.size(); ++i)
        if (!(panels[i].subject == panels[0].subject))
            throw input_error("common-test intersection requires panels of one subject");

    std::vector<TestKey> common;
    for (const TestKey& candidate : panels[0].tests) {
        const bool everywhere = std::all_of(
            panels.begin() + 1, panels.end(), [&](const ScorePanel& panel) {
                return std::any_of(panel.tests.begin(), panel.tests.end(),
                                   [&](const TestKey& t) { return same_series(t, candidate); });
            });
        if (everywhere) common.push_back(candidate);
    }
    std::sort(common.begin(), common.end(),
              [](const TestKey& a, const TestKey& b) { return a.order_index < b.order_index; });
    if (common.empty())
        throw input_error("no test series is present in every cohort; "
                          "check the screening report for over-exclusion");
    return common;
}

}  // namespace trendmine
