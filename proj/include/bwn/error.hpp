#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bwn {

enum class Errc {
  shape_mismatch,
  invalid_argument,
  non_finite,
  missing_cache,
  out_of_range,
  not_found,
  config,
  numeric,
  io,
  // model file failures
  bad_magic,
  bad_version,
  crc_mismatch,
  truncated,
  length_mismatch,
  nonzero_padding,
  bad_record,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure in the engine is reported through this type. The code is
/// stable and machine-checkable; the message names the offending values.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

  /// True for the model-file family of errors (bad magic through bad record).
  bool is_format_error() const noexcept { return code_ >= Errc::bad_magic; }

 private:
  Errc code_;
};

}  // namespace bwn
