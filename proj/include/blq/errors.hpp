#pragma once

#include <stdexcept>
#include <string>

namespace blq {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed problem file, expression or configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Denominator vanished while evaluating a coefficient expression.
class DomainError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class RegressionError : public Error {
public:
    using Error::Error;
};

class SingularDesignError : public RegressionError {
public:
    using RegressionError::RegressionError;
};

class LinearSolveError : public Error {
public:
    using Error::Error;
};

class BlowupError : public Error {
public:
    using Error::Error;
};

// Raised when I + Sigma N (or a similar factor) is too ill-conditioned to invert.
class InversionError : public Error {
public:
    using Error::Error;
};

using ConditioningError = InversionError;

class NonmonotoneError : public Error {
public:
    using Error::Error;
};

class NoConvergenceError : public Error {
public:
    NoConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class DegenerateInputError : public Error {
public:
    using Error::Error;
};

} // namespace blq
