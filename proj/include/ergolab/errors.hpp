#pragma once

#include <stdexcept>
#include <string>

namespace ergolab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad cutoff, negative time, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class OffGridError : public Error {
public:
    using Error::Error;
};

class AliasingError : public Error {
public:
    using Error::Error;
};

class Unsupported : public Error {
public:
    using Error::Error;
};

class CapExceeded : public Error {
public:
    using Error::Error;
};

class NonUnimodularGamma : public Error {
public:
    using Error::Error;
};

/// A construction-time check failed (e.g. a chain member is not Dunford-Schwartz).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Errors raised when a numerical guard trips. The CLI maps these to exit code 3.
class NumericalGuard : public Error {
public:
    using Error::Error;
};

class NotPowerBounded : public NumericalGuard {
public:
    using NumericalGuard::NumericalGuard;
};

class IllConditionedEigenbasis : public NumericalGuard {
public:
    using NumericalGuard::NumericalGuard;
};

class ClusterAmbiguity : public NumericalGuard {
public:
    using NumericalGuard::NumericalGuard;
};

class ToleranceOverlap : public NumericalGuard {
public:
    using NumericalGuard::NumericalGuard;
};

class SizeError : public NumericalGuard {
public:
    using NumericalGuard::NumericalGuard;
};

class InstabilityError : public NumericalGuard {
public:
    using NumericalGuard::NumericalGuard;
};

} // namespace ergolab
