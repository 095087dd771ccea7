#pragma once

#include <stdexcept>
#include <string>

namespace smallgain {

// Invalid problem data: bad dimensions, unsupported exponents, empty sets,
// malformed configs. CLI maps this to the input-error exit code.
class SpecError : public std::runtime_error {
public:
    explicit SpecError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failure during an otherwise well-posed computation: divergence,
// overflow, a verification that cannot be completed.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Message as const char* so passing checks never build a std::string; this
// sits on integrator hot paths.
inline void require(bool cond, const char* what) {
    if (!cond) throw SpecError(what);
}

}  // namespace smallgain
