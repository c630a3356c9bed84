#pragma once

#include <stdexcept>
#include <string>

namespace netdyn {

// Bad user-supplied parameters or configuration files.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor/matrix shapes or violated operation contracts.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values, non-convergence, integration failure.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem and file-format failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace netdyn
