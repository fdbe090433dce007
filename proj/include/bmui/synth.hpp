#pragma once

// Seeded stand-in for recorded sessions. Intent is a trapezoid per trial;
// EEG carries it as 15-35 Hz amplitude modulation, EMG as the amplitude of
// 20-450 Hz noise delayed by the neuromuscular delay, force as a smoothed sum
// of the EMG drive sampled at 6.6 Hz.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bmui/direction.hpp"
#include "bmui/dsp.hpp"
#include "bmui/session.hpp"
#include "bmui/signal.hpp"

namespace bmui::synth {

inline constexpr double kEegRateHz = 500.0;
inline constexpr double kEmgRateHz = 1000.0;
inline constexpr double kForceRateHz = 6.6;
inline constexpr double kRiseSeconds = 0.3;
inline constexpr double kLowEffort = 0.5;
inline constexpr double kHighEffort = 1.0;

struct TrialSpec {
  Direction direction = Direction::flex;
  double level = kHighEffort;
  double duration_s = 3.0;
};

struct SynthConfig {
  std::uint64_t seed = 42;
  int n_trials = 60;
  double trial_duration_s = 3.0;
  double rest_duration_s = 2.0;
  std::size_t n_eeg_ch = 16;
  std::size_t n_emg_ch = 12;
  // Per-EMG-channel coupling to each direction; empty selects the default
  // elbow-muscle profile for 6 or 12 channels.
  std::vector<double> gain_flex;
  std::vector<double> gain_extend;
  double delay_ms = 50.0;
  double eeg_snr_db = -3.0;  // modulated beta amplitude vs broadband noise
  double emg_snr_db = 20.0;
  std::string subject_id = "synthetic";
  // When non-empty, replaces the generated trial sequence.
  std::vector<TrialSpec> schedule;
};

struct SynthResult {
  RawSession session;
  session::GroundTruth truth;
};

void validate(const SynthConfig& cfg);
std::vector<std::string> emg_channel_names(std::size_t n_emg_ch);
std::vector<std::string> eeg_channel_names(std::size_t n_eeg_ch);
std::vector<double> default_gains(std::size_t n_emg_ch, Direction d);

SynthResult synthesize_session(const SynthConfig& cfg);

// Per-stream generator seeds derived from the config seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream);

/// Streaming EEG generator at 500 Hz. Shared by the offline generator and the
/// live synthetic source so both produce the same signal model.
class EegSynthesizer {
 public:
  explicit EegSynthesizer(const SynthConfig& cfg);

  std::size_t n_channels() const noexcept { return n_ch_; }
  // One output column per intent sample pair.
  Matrix generate(std::span<const double> u_flex, std::span<const double> u_extend);

 private:
  std::size_t n_ch_;
  double amplitude_;
  double noise_;
  double baseline_ = 0.3;
  std::vector<double> alpha_flex_, alpha_extend_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_;
  dsp::StreamingFilterState carrier_;
  double carrier_scale_;
  std::vector<double> pink_;  // [channel + common][7]
  double pink_scale_;
  std::size_t t_ = 0;
};

/// Intent trace that follows operator commands with the trapezoid's rise rate.
class IntentFollower {
 public:
  void set_target(Direction d, double level);
  // Advances one sample at `rate_hz`; returns (u_flex, u_extend).
  std::pair<double, double> step(double rate_hz);
  Direction direction() const noexcept { return direction_; }
  double level() const noexcept { return level_; }

 private:
  Direction direction_ = Direction::rest;
  double target_ = 0.0;
  double u_flex_ = 0.0;
  double u_extend_ = 0.0;
  double level_ = 0.0;
};

}  // namespace bmui::synth
