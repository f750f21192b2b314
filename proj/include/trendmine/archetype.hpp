#pragma once

#include <compare>
#include <string>

#include "trendmine/errors.hpp"

namespace trendmine {

// Trajectory archetype a cluster is named after. The four named kinds apply
// to deviation-score trajectories (midpoint 50); `other` carries a cluster
// index for scales where the naming rule is not defined.
struct ArchetypeLabel {
    enum class Kind {
        stay_high_stably,
        stay_low_stably,
        increase_from_low,
        decrease_from_high,
        other,
    };

    Kind kind = Kind::other;
    int other_index = 0;  // meaningful only for Kind::other

    static ArchetypeLabel stay_high() { return {Kind::stay_high_stably, 0}; }
    static ArchetypeLabel stay_low() { return {Kind::stay_low_stably, 0}; }
    static ArchetypeLabel increase() { return {Kind::increase_from_low, 0}; }
    static ArchetypeLabel decrease() { return {Kind::decrease_from_high, 0}; }
    static ArchetypeLabel other(int index) { return {Kind::other, index}; }

    bool is_named() const { return kind != Kind::other; }

    friend auto operator<=>(const ArchetypeLabel&, const ArchetypeLabel&) = default;
};

inline std::string to_string(const ArchetypeLabel& label) {
    switch (label.kind) {
        case ArchetypeLabel::Kind::stay_high_stably: return "stay_high_stably";
        case ArchetypeLabel::Kind::stay_low_stably: return "stay_low_stably";
        case ArchetypeLabel::Kind::increase_from_low: return "increase_from_low";
        case ArchetypeLabel::Kind::decrease_from_high: return "decrease_from_high";
        case ArchetypeLabel::Kind::other: break;
    }
    return "other_" + std::to_string(label.other_index);
}

inline ArchetypeLabel parse_archetype(const std::string& text) {
    if (text == "stay_high_stably") return ArchetypeLabel::stay_high();
    if (text == "stay_low_stably") return ArchetypeLabel::stay_low();
    if (text == "increase_from_low") return ArchetypeLabel::increase();
    if (text == "decrease_from_high") return ArchetypeLabel::decrease();
    if (text.rfind("other_", 0) == 0)
        return ArchetypeLabel::other(std::stoi(text.substr(6)));
    throw input_error("unknown archetype label: " + text);
}

}  // namespace trendmine
