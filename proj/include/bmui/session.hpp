#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bmui/matrix.hpp"
#include "bmui/signal.hpp"

namespace bmui::session {

inline constexpr std::string_view kFormatVersion = "bmui-session/1";

/// Half-open [start, end) sample range at 1000 Hz.
struct ActiveInterval {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string trial_label;

  std::size_t length() const noexcept { return end - start; }
  friend bool operator==(const ActiveInterval&, const ActiveInterval&) = default;
};

/// Latent intent traces of a synthetic session, sampled at 1000 Hz.
struct GroundTruth {
  double rate_hz = kAlignedRateHz;
  std::vector<double> u_flex;
  std::vector<double> u_extend;
  std::vector<ActiveInterval> intervals;  // where either trace is non-zero
};

// Intervals where u_flex or u_extend is positive, labelled by trial order.
std::vector<ActiveInterval> intervals_from_traces(const GroundTruth& truth,
                                                  std::span<const MovementLabel> labels);

// ---- persistence -----------------------------------------------------------

/// Writes manifest.json plus eeg.csv / emg.csv / force.csv (and groundtruth.csv
/// when `truth` is given). Values are written with 9 significant digits.
void save_session(const RawSession& session, const std::filesystem::path& dir,
                  const GroundTruth* truth = nullptr, std::string_view stage = "raw");

RawSession load_session(const std::filesystem::path& dir);
std::optional<GroundTruth> load_ground_truth(const std::filesystem::path& dir);
std::string load_stage(const std::filesystem::path& dir);

// Value as it reads back from the text format.
double round_trip_value(double v);

// ---- segmentation ----------------------------------------------------------

struct SegmentationPolicy {
  double fraction = 0.2;         // enter threshold relative to session max
  double exit_ratio = 0.5;       // exit threshold relative to the enter threshold
  double min_duration_ms = 300.0;
};

/// Threshold-with-hysteresis detection on the summed force magnitude.
std::vector<ActiveInterval> detect_active_periods(const MultiChannelSignal& force,
                                                  const SegmentationPolicy& policy = {});

/// One slice per interval, all modalities cut identically. The k-th trial
/// carries the k-th movement label of the session.
std::vector<AlignedSession> segment_session(const AlignedSession& aligned,
                                            std::span<const ActiveInterval> intervals);

// ---- windowing -------------------------------------------------------------

struct WindowConfig {
  double window_ms = 200.0;
  double stride_ms = 50.0;
  double rate_hz = kAlignedRateHz;

  std::size_t window_samples() const;
  std::size_t stride_samples() const;
};

struct WindowPair {
  Matrix x;               // [eeg channels x W]
  std::vector<double> y;  // envelope per EMG channel at the window's last sample
  std::string trial_label;
  std::size_t trial_id = 0;
  std::size_t t_end = 0;  // trial-local index of the last sample
};

struct WindowSet {
  std::vector<WindowPair> windows;
  std::size_t skipped_trials = 0;  // trials shorter than one window
};

/// Trials must carry preprocessed EEG in `eeg` and envelopes in `emg`.
WindowSet make_windows(std::span<const AlignedSession> trials, const WindowConfig& cfg = {});

// ---- offline pipeline ------------------------------------------------------

/// Aligned session with preprocessed EEG (CAR + band-pass), EMG replaced by its
/// envelope, and the detected active intervals.
struct PreparedSession {
  AlignedSession signals;
  std::vector<ActiveInterval> intervals;
  std::vector<AlignedSession> trials;
};

AlignedSession preprocess_aligned(const AlignedSession& aligned);
PreparedSession prepare_session(const RawSession& raw, const SegmentationPolicy& policy = {});
// Re-segments a session that already went through preprocess_aligned.
PreparedSession prepare_preprocessed(const AlignedSession& preprocessed,
                                     const SegmentationPolicy& policy = {});

// Direction named by a movement label ("flex_high" -> "flex").
std::string direction_of(std::string_view label);

}  // namespace bmui::session
