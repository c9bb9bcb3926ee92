#pragma once

#include <stdexcept>
#include <string>

namespace threshold_lab {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad index, empty grid, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A model assumption (positivity, integrability) does not hold.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numerical routine failed outright (eigen-solver, bracketing).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Result did not converge to the requested accuracy.
class AccuracyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Input is well-formed but degenerate (e.g. an identically zero potential).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// Configuration text could not be parsed or is inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A hypothesis of the experiment (subcriticality of every pair) fails.
class HypothesisError : public Error {
public:
    using Error::Error;
};

}  // namespace threshold_lab
