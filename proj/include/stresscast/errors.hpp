#pragma once

#include <stdexcept>
#include <string>

namespace stresscast {

// Bad input data: unparseable files, schema mismatches, invariant violations.
// The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failure: divergence, singular systems, non-finite results.
// The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad invocation: unknown flags, missing config fields. Exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace stresscast
