#pragma once

#include <stdexcept>
#include <string>

namespace cavtrack {

// Invalid user input: bad flags, malformed config, inconsistent files.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical routine failed its own consistency requirements
// (non-converged quadrature, singular solve, broken Hermitian pairing).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cavtrack
