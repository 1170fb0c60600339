#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pointgrow {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kOutOfRange,
  kMissingFile,
  kMalformedPng,
  kUnsupportedFormat,
  kInvalidClass,
  kIo,
  kNonFinite,
  kEmpty,
  kDuplicate,
  kBadMagic,
  kBadVersion,
  kTruncated,
  kNotFound,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. The code distinguishes failure classes so callers
/// (CLI exit codes, HTTP status mapping) can react without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pointgrow
