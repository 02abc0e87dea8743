#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lensforge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed prescription or config text. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A value that parsed but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tracing produced no usable result, e.g. every pupil ray was vignetted.
class TraceError : public Error {
 public:
  using Error::Error;
};

/// Binary container problems (PSF libraries, field models, images).
class FormatError : public Error {
 public:
  enum class Kind { Magic, Version, Truncated, Checksum, Dimensions, Io };

  FormatError(Kind kind, const std::string& what);
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(FormatError::Kind kind) noexcept;

}  // namespace lensforge
