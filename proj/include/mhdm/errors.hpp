// Error types shared across the library.
//
// Preconditions are reported with std::invalid_argument. The two types below
// cover the remaining failure modes: an iterative routine that ran out of
// budget (the best estimate so far is carried along), and a request that is
// structurally outside what a routine supports.

#pragma once

#include <stdexcept>
#include <string>

namespace mhdm {

class numerical_failure : public std::runtime_error {
public:
    numerical_failure(const std::string& what, double last_estimate)
        : std::runtime_error(what), last_estimate_(last_estimate) {}

    double last_estimate() const { return last_estimate_; }

private:
    double last_estimate_;
};

class unsupported_combination : public std::invalid_argument {
public:
    explicit unsupported_combination(const std::string& what)
        : std::invalid_argument(what) {}
};

} // namespace mhdm
