#pragma once

#include <stdexcept>
#include <string>

namespace vaf {

enum class ErrorCode {
  kDomain = 1,
  kShape,
  kNumeric,
  kIo,
  kFormat,
  kVersion,
  kArgument,
};

const char* error_code_name(ErrorCode code) noexcept;

/// Base exception for every failure raised by the library. The code maps 1:1
/// onto the C API status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::kDomain, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCode::kShape, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCode::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCode::kFormat, what) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorCode::kVersion, what) {}
};

}  // namespace vaf
