#pragma once

#include <stdexcept>
#include <string>

namespace ldb {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Vector or matrix sizes do not match the model dimensions.
class DimensionError : public Error {
public:
    using Error::Error;
};

// An operation's documented precondition does not hold.
class PreconditionError : public Error {
public:
    using Error::Error;
};

// sigma sigma^* is singular (or the ellipticity ratio vanishes) at a point
// along a path. Carries the first time at which it happened.
class DegenerateError : public Error {
public:
    DegenerateError(const std::string& what, double time)
        : Error(what), time_(time) {}

    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

// A state became non-finite while integrating.
class NonFiniteError : public Error {
public:
    NonFiniteError(const std::string& what, double time)
        : Error(what), time_(time) {}

    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

// A hypothesis of a bound formula, checked along a path, does not hold.
class HypothesisError : public Error {
public:
    using Error::Error;
};

}  // namespace ldb
