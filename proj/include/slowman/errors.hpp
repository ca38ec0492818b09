#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slowman {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on user input was violated (bad parameter, bad config).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An eigenvalue or angle lies outside the admissible (Hurwitz) domain.
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A state or iterate became non-finite.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Newton-type root find did not converge.
class RootFindError : public Error {
public:
    using Error::Error;
};

/// A Jacobian that must be invertible is (numerically) singular.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

/// Finite-difference nesting too deep for double precision.
class PrecisionError : public Error {
public:
    using Error::Error;
};

/// Eigensolver or linear-algebra failure.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Bisection bracket does not contain a sign change.
class BracketError : public Error {
public:
    using Error::Error;
};

/// Least-squares fit impossible (too few usable points).
class FitError : public Error {
public:
    using Error::Error;
};

}  // namespace slowman
