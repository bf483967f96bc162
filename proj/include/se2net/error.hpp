#pragma once

#include <stdexcept>
#include <string>

namespace se2net {

/// Invalid configuration value, unknown registry name, or inconsistent model layout.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training objective became non-finite.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace se2net
