#include "lensforge/error.hpp"

namespace lensforge {

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

FormatError::FormatError(Kind kind, const std::string& what)
    : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

const char* to_string(FormatError::Kind kind) noexcept {
  switch (kind) {
    case FormatError::Kind::Magic: return "bad magic";
    case FormatError::Kind::Version: return "unsupported version";
    case FormatError::Kind::Truncated: return "truncated";
    case FormatError::Kind::Checksum: return "checksum mismatch";
    case FormatError::Kind::Dimensions: return "bad dimensions";
    case FormatError::Kind::Io: return "io error";
  }
  return "format error";
}

}  // namespace lensforge
