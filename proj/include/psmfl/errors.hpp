#pragma once

#include <stdexcept>
#include <string>

namespace psmfl {

// Error taxonomy mirrors the CLI exit-code contract:
//   usage errors are handled by the CLI layer (exit 1),
//   DataError and subclasses map to exit 2,
//   TrainingError maps to exit 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed trace line; message carries the 1-based line number.
struct ParseError : DataError {
    using DataError::DataError;
};

// Structurally valid input that contradicts the declared graph/schema.
struct SchemaError : DataError {
    using DataError::DataError;
};

// Invariant violations inside otherwise well-formed data
// (e.g. non-monotone invocation ids).
struct IntegrityError : DataError {
    using DataError::DataError;
};

struct InsufficientDataError : DataError {
    using DataError::DataError;
};

// Non-finite values where finite ones are required.
struct DomainError : DataError {
    using DataError::DataError;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace psmfl
