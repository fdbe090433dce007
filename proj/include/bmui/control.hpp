#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bmui/direction.hpp"
#include "bmui/matrix.hpp"
#include "bmui/neural/classifier.hpp"

namespace bmui::control {

inline constexpr double kMaxSpeedDegS = 60.0;
inline constexpr double kMinAngleDeg = 0.0;
inline constexpr double kMaxAngleDeg = 150.0;
inline constexpr int kDebounceSteps = 3;
inline constexpr std::size_t kHistorySteps = 10;  // classifier input length
inline constexpr double kStepSeconds = 0.05;

struct Calibration {
  std::size_t channel_index = 0;
  double env_min = 0.0;
  double env_max = 1.0;
};

struct ControlCommand {
  Direction direction = Direction::rest;
  double magnitude = 0.0;
  long t = 0;
};

struct ArmState {
  double elbow_angle_deg = 0.0;
  double angular_velocity_deg_s = 0.0;
};

// Linear-interpolated percentile, q in [0, 100].
double percentile(std::span<const double> values, double q);

/// Envelopes are [channels x samples] at `rate_hz`; each segment needs at
/// least one second. env_min is the 95th percentile of rest, env_max the 90th
/// of effort on the best-SCC channel.
Calibration calibrate(const Matrix& rest, const Matrix& effort, std::span<const double> scc_per_channel,
                      double rate_hz);

// (env - lo) / (env_max - lo) clamped to [0, 1], lo raised by the threshold fraction.
double proportional_map(double env_value, const Calibration& calib, double threshold_fraction = 0.0);

/// Debounce state machine plus magnitude mapping. Single owner.
class DpEmgController {
 public:
  // Raw per-step decision in, debounced direction out.
  Direction debounce(Direction raw);

  /// history is [n_emg_ch x kHistorySteps], oldest column first.
  /// Fewer columns -> warming_up.
  ControlCommand step(const Matrix& history, const neural::Classifier& classifier, const Calibration& calib);

  // Fuses an already debounced direction with the latest envelope.
  ControlCommand command(Direction direction, double env_value, const Calibration& calib);

  void reset();
  Direction direction() const noexcept { return current_; }

  double threshold_fraction = 0.0;

 private:
  Direction current_ = Direction::rest;
  Direction candidate_ = Direction::rest;
  int streak_ = 0;
  long t_ = 0;
};

// velocity = K * gain * magnitude * sign(direction); angle clamped to [0, 150].
ArmState arm_update(const ArmState& state, const ControlCommand& cmd, double dt_s, double gain = 1.0);

}  // namespace bmui::control
