#ifndef DGGCN_ERROR_HPP
#define DGGCN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dggcn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file or record.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input graph violates a structural precondition.
class GraphError : public Error {
public:
    using Error::Error;
};

} // namespace dggcn

#endif // DGGCN_ERROR_HPP
