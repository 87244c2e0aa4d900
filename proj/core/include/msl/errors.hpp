#pragma once

#include <stdexcept>
#include <string>

namespace msl {

// Bad input: malformed files, inconsistent dimensions, invalid parameters.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A computation that should have succeeded did not (factorisation, non-finite values).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace msl
