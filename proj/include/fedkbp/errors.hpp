#pragma once

#include <stdexcept>
#include <string>

namespace fedkbp {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// ConfigError -> 2 (usage), DataError/EvalError -> 3 (data), ProtocolError -> 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration: bad flag values, pool/schedule size mismatch,
// dims that the model cannot process.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or inconsistent input data (files, CSV rows, grids, masks).
struct DataError : Error {
    using Error::Error;
};

// Structural mismatch between parameter vectors (manifest disagreement).
struct StructuralError : Error {
    using Error::Error;
};

// Wire-protocol violations: bad frames, truncation, mid-round site failure.
struct ProtocolError : Error {
    using Error::Error;
};

// Evaluation cannot be performed (empty mask, empty ROI, no criteria).
struct EvalError : Error {
    using Error::Error;
};

}  // namespace fedkbp
