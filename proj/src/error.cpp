#include "bmui/error.hpp"

namespace bmui {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::unsupported_downsample: return "unsupported-downsample";
    case ErrorCode::invalid_session: return "invalid-session";
    case ErrorCode::invalid_design: return "invalid-design";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::signal_too_short: return "signal-too-short";
    case ErrorCode::invalid_rate: return "invalid-rate";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::corrupt_session: return "corrupt-session";
    case ErrorCode::unsupported_version: return "unsupported-version";
    case ErrorCode::invalid_config: return "invalid-config";
    case ErrorCode::invalid_interval: return "invalid-interval";
    case ErrorCode::shape_error: return "shape-error";
    case ErrorCode::check_failed: return "check-failed";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::corrupt_model: return "corrupt-model";
    case ErrorCode::undefined_correlation: return "undefined-correlation";
    case ErrorCode::degenerate_sample: return "degenerate-sample";
    case ErrorCode::calibration_failed: return "calibration-failed";
    case ErrorCode::warming_up: return "warming-up";
    case ErrorCode::startup_error: return "startup-error";
  }
  return "unknown";
}

}  // namespace bmui
