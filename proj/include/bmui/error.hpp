#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bmui {

enum class ErrorCode {
  invalid_argument,
  unsupported_downsample,
  invalid_session,
  invalid_design,
  unsupported,
  signal_too_short,
  invalid_rate,
  not_found,
  corrupt_session,
  unsupported_version,
  invalid_config,
  invalid_interval,
  shape_error,
  check_failed,
  insufficient_data,
  corrupt_model,
  undefined_correlation,
  degenerate_sample,
  calibration_failed,
  warming_up,
  startup_error,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure the library reports carries one of the codes above so callers
// (CLI, protocol handler, tests) can branch on kind instead of message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bmui
