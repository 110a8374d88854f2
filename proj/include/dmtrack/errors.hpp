#pragma once

#include <stdexcept>
#include <string>

namespace dmtrack {

// Shape/dimension violations (matmul mismatch, non-scalar loss, bad box extents).
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Domain violations on otherwise well-shaped values (log of non-positive input,
// non-positive box height, confidence out of range).
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed external data: MOT files, config files, checkpoints.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failures: singular innovation covariance, non-finite activations,
// rejected optimizer steps, diverged training.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad command-line / config usage (unknown key, missing argument).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dmtrack
