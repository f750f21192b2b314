#pragma once

#include <stdexcept>
#include <string>

namespace trendmine {

// Error taxonomy mirrors the CLI exit codes: input problems (1),
// numerical failures such as separation/degeneracy (2), and
// cross-cohort validation failures (3).

struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace trendmine
