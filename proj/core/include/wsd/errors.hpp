#pragma once

#include <stdexcept>
#include <string>

namespace wsd {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input document (annotation XML, config, checkpoint).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A value violates a type invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Shapes, sizes or settings are inconsistent with each other.
class ConfigError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// Dataset content is insufficient for the requested operation.
class DataError : public Error {
public:
    using Error::Error;
};

/// Similarity gating was requested against an empty weed bank.
class GatingError : public Error {
public:
    using Error::Error;
};

}  // namespace wsd
