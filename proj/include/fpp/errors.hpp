#pragma once

#include <stdexcept>
#include <string>

namespace fpp {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Model data violates a structural requirement (empty measure, rank-deficient
// volatility, non-integrable speed density, correlation matrix not PSD, ...).
struct InvalidModelError : Error {
    using Error::Error;
};

// A numerical routine failed to reach its target accuracy.
struct NumericError : Error {
    NumericError(const std::string& what, double achieved)
        : Error(what + " (achieved tolerance " + std::to_string(achieved) + ")"),
          achieved_tolerance(achieved) {}
    explicit NumericError(const std::string& what) : Error(what), achieved_tolerance(0) {}
    double achieved_tolerance;
};

// Requested point lies outside the range of an invertible map.
struct RangeError : Error {
    using Error::Error;
};

// Closed-form benchmark parameters fall outside the admissible cases.
struct RegimeError : Error {
    using Error::Error;
};

// A value surface lost strict concavity where it is required.
struct ConcavityError : Error {
    using Error::Error;
};

// Configuration file rejected.
struct ValidationError : Error {
    using Error::Error;
};

}  // namespace fpp
