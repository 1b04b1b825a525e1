#pragma once

#include <stdexcept>
#include <string>

namespace homoglab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or structurally invalid arguments.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Evaluation of a field outside the window of its realization.
class OutOfWindow : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated, or corrupted file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A coefficient matrix cannot be written as a nonnegative combination of
/// the fixed stencil directions, or an operator has no monotone discretization.
class StencilError : public Error {
public:
    using Error::Error;
};

/// Iterative method failed to reach its tolerance.
class NonConvergence : public Error {
public:
    using Error::Error;
};

/// More realizations failed than the experiment tolerates.
class PartialFailure : public NonConvergence {
public:
    using NonConvergence::NonConvergence;
};

/// Root finding could not find a sign change.
class BracketError : public Error {
public:
    using Error::Error;
};

/// Configuration rejected before any computation.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace homoglab
