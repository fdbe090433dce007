#include "bmui/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bmui/error.hpp"

namespace bmui::control {

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::insufficient_data, "percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw Error(ErrorCode::invalid_argument, "percentile outside [0, 100]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Calibration calibrate(const Matrix& rest, const Matrix& effort, std::span<const double> scc_per_channel,
                      double rate_hz) {
  if (scc_per_channel.empty()) throw Error(ErrorCode::invalid_argument, "no channel scores");
  if (rest.rows() != scc_per_channel.size() || effort.rows() != scc_per_channel.size()) {
    throw Error(ErrorCode::shape_error, "envelope channels do not match the score vector");
  }
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::invalid_rate, "rate must be positive");
  const double need = std::ceil(rate_hz - 1e-9);
  if (static_cast<double>(rest.cols()) < need || static_cast<double>(effort.cols()) < need) {
    throw Error(ErrorCode::insufficient_data, "calibration segments must cover at least 1 s");
  }
  Calibration c;
  c.channel_index = static_cast<std::size_t>(
      std::max_element(scc_per_channel.begin(), scc_per_channel.end()) - scc_per_channel.begin());
  c.env_min = std::max(0.0, percentile(rest.row(c.channel_index), 95.0));
  c.env_max = percentile(effort.row(c.channel_index), 90.0);
  if (!(c.env_max > c.env_min)) {
    throw Error(ErrorCode::calibration_failed, "effort level does not exceed rest on channel " +
                                                   std::to_string(c.channel_index));
  }
  return c;
}

double proportional_map(double env_value, const Calibration& calib, double threshold_fraction) {
  const double lo = calib.env_min + threshold_fraction * (calib.env_max - calib.env_min);
  if (!(calib.env_max > lo)) return env_value >= calib.env_max ? 1.0 : 0.0;
  return std::clamp((env_value - lo) / (calib.env_max - lo), 0.0, 1.0);
}

Direction DpEmgController::debounce(Direction raw) {
  if (raw == current_) {
    streak_ = 0;
    candidate_ = current_;
    return current_;
  }
  if (raw == candidate_) {
    ++streak_;
  } else {
    candidate_ = raw;
    streak_ = 1;
  }
  if (streak_ >= kDebounceSteps) {
    current_ = raw;
    streak_ = 0;
  }
  return current_;
}

ControlCommand DpEmgController::command(Direction direction, double env_value, const Calibration& calib) {
  ControlCommand cmd;
  cmd.t = t_++;
  cmd.direction = direction;
  cmd.magnitude = direction == Direction::rest ? 0.0 : proportional_map(env_value, calib, threshold_fraction);
  return cmd;
}

ControlCommand DpEmgController::step(const Matrix& history, const neural::Classifier& classifier,
                                     const Calibration& calib) {
  if (history.cols() < kHistorySteps) {
    throw Error(ErrorCode::warming_up, std::to_string(history.cols()) + " of " + std::to_string(kHistorySteps) +
                                           " history steps");
  }
  if (calib.channel_index >= history.rows()) {
    throw Error(ErrorCode::shape_error, "calibrated channel outside the envelope history");
  }
  const Direction raw = neural::argmax_direction(classifier.logits(history));
  return command(debounce(raw), history(calib.channel_index, history.cols() - 1), calib);
}

void DpEmgController::reset() {
  current_ = candidate_ = Direction::rest;
  streak_ = 0;
  t_ = 0;
}

ArmState arm_update(const ArmState& state, const ControlCommand& cmd, double dt_s, double gain) {
  double sign = 0.0;
  if (cmd.direction == Direction::flex) sign = 1.0;
  if (cmd.direction == Direction::extend) sign = -1.0;
  ArmState next;
  next.angular_velocity_deg_s = kMaxSpeedDegS * gain * cmd.magnitude * sign;
  next.elbow_angle_deg =
      std::clamp(state.elbow_angle_deg + next.angular_velocity_deg_s * dt_s, kMinAngleDeg, kMaxAngleDeg);
  return next;
}

}  // namespace bmui::control
