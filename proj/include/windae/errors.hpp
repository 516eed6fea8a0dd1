#pragma once

#include <stdexcept>
#include <string>

namespace windae {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values (bad fractions, out-of-range percentile, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Input data violates a contract (empty train split, all-NaN channel, ...).
struct DataError : Error {
    using Error::Error;
};

// Malformed text input; message carries the offending line number.
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid text with inconsistent content (non-uniform step,
// duplicate channel names, ...).
struct FormatError : Error {
    using Error::Error;
};

// Series or matrix too short for the requested operation.
struct SizeError : Error {
    using Error::Error;
};

// API misuse: shape mismatch, non-scalar loss, wrong sequence length.
struct UsageError : Error {
    using Error::Error;
};

// Operation on an object that has not been fitted/trained yet.
struct StateError : Error {
    using Error::Error;
};

// Non-finite value produced or consumed by numeric code.
struct NumericError : Error {
    using Error::Error;
};

// Training diverged; message names epoch and batch.
struct TrainingError : Error {
    using Error::Error;
};

// Feature layout does not match the layout a checkpoint was trained on.
struct CompatibilityError : Error {
    using Error::Error;
};

// Calibration impossible (single-class validation labels, constant scores).
struct CalibrationError : Error {
    using Error::Error;
};

// Metric undefined for the given label distribution.
struct UndefinedMetricError : Error {
    using Error::Error;
};

// A pipeline stage is missing one of its input artifacts.
struct MissingInputError : Error {
    using Error::Error;
};

} // namespace windae
