#pragma once

#include <stdexcept>
#include <string>

namespace sags {

// Bad run configuration or invalid hyperparameters.  CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (files, array shapes).  CLI exit code 2.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or other numerical failure during optimization.  CLI exit code 3.
struct NumericalAbort : std::runtime_error {
    explicit NumericalAbort(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sags
