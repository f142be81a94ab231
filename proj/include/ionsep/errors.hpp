// Error types shared across the toolkit. NumericError maps to CLI exit code 3,
// IoError to 4, UsageError to 2.
#pragma once

#include <stdexcept>
#include <string>

namespace ionsep {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RangeError : NumericError {
    using NumericError::NumericError;
};

struct NonConfiningError : NumericError {
    using NumericError::NumericError;
};

struct NoEquilibriumError : NumericError {
    using NumericError::NumericError;
};

struct ConvergenceError : NumericError {
    using NumericError::NumericError;
};

struct UnstableConfigurationError : NumericError {
    using NumericError::NumericError;
};

struct DegenerateFitError : NumericError {
    using NumericError::NumericError;
};

struct IdentifiabilityError : NumericError {
    using NumericError::NumericError;
};

struct SaturationError : NumericError {
    using NumericError::NumericError;
};

struct RateError : NumericError {
    using NumericError::NumericError;
};

struct TruncationError : NumericError {
    using NumericError::NumericError;
};

struct ClassificationError : NumericError {
    using NumericError::NumericError;
};

struct TimestepError : NumericError {
    using NumericError::NumericError;
};

struct EscapeError : NumericError {
    using NumericError::NumericError;
};

struct WindowNotFoundError : NumericError {
    using NumericError::NumericError;
};

struct DivergenceError : NumericError {
    using NumericError::NumericError;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace ionsep
