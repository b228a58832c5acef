#pragma once

#include <stdexcept>
#include <string>

namespace xfc {

// Base of every error raised by the library. The exit-code mapping used by the
// CLI keys off the concrete type.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or stream header.
class FormatError : public Error {
public:
  using Error::Error;
};

// Checksum mismatch.
class IntegrityError : public Error {
public:
  using Error::Error;
};

class CorruptStreamError : public Error {
public:
  using Error::Error;
};

// Non-finite sample in an input field.
class DataError : public Error {
public:
  using Error::Error;
};

class DegenerateFieldError : public Error {
public:
  using Error::Error;
};

class ArgumentError : public Error {
public:
  using Error::Error;
};

class ManifestError : public Error {
public:
  using Error::Error;
};

// Error bound too small for the value range of a field.
class PrecisionError : public Error {
public:
  using Error::Error;
};

class FitError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace xfc
