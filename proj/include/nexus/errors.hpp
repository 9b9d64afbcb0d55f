#pragma once

#include <stdexcept>
#include <string>

namespace nexus {

// Error taxonomy shared by the whole engine. The CLI maps these onto
// distinct process exit codes (see tools/), so keep the hierarchy flat
// and the categories stable.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor extents; message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Argument outside its mathematical domain (zero period, quantile level
// outside (0,1), unsorted levels, degenerate kernel rows, ...).
struct DomainError : Error {
    using Error::Error;
};

// Inconsistent or unknown configuration keys/values. Fail-closed.
struct ConfigError : Error {
    using Error::Error;
};

// Ingestion, split, windowing and generator problems (includes unstable
// synthetic coefficient specs).
struct DataError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    using Error::Error;
};

// Bad command-line invocation (missing checkpoint, unknown generator, ...).
struct UsageError : Error {
    using Error::Error;
};

// A public numeric operation produced NaN/Inf.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace nexus
