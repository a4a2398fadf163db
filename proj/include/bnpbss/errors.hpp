#pragma once

#include <stdexcept>
#include <string>

namespace bnpbss {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
  public:
    using Error::Error;
};

class IndexError : public Error {
  public:
    using Error::Error;
};

class DomainError : public Error {
  public:
    using Error::Error;
};

/// Raised when an intermediate quantity becomes non-finite or a matrix is
/// singular. The message carries the location (iteration, bin, basis...).
class NumericError : public Error {
  public:
    using Error::Error;
};

class DivergentMoment : public NumericError {
  public:
    using NumericError::NumericError;
};

class SingularMatrix : public NumericError {
  public:
    using NumericError::NumericError;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class FileNotFound : public IoError {
  public:
    using IoError::IoError;
};

class MalformedHeader : public IoError {
  public:
    using IoError::IoError;
};

class UnsupportedEncoding : public IoError {
  public:
    using IoError::IoError;
};

} // namespace bnpbss
