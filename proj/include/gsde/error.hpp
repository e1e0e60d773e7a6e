#pragma once

#include <stdexcept>
#include <string>

namespace gsde {

/// Incompatible matrix or batch dimensions.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Out-of-range argument (negative spread, zero batch, ...).
struct ParamError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed file contents; message carries the 1-based line number.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A caller broke an API contract (e.g. an unlabeled row fed to a
/// supervised loss).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Non-finite value detected mid-computation; aborts the run.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gsde
