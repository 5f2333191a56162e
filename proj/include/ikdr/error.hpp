#pragma once

#include <stdexcept>
#include <string>

namespace ikdr {

/// Bad input: unreadable files, malformed CSV, invalid configuration.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite objective, divergence, indefinite systems.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ikdr
