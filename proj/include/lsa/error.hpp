#pragma once

#include <stdexcept>
#include <string>

namespace lsa {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A domain type invariant was violated (bad box, N < 2, non-finite value, ...).
class InvariantError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (e.g. loss weight at sigma = 0).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed or missing on-disk data.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Checkpoint or config does not match the expected backbone shapes or format version.
class SpecMismatchError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace lsa
