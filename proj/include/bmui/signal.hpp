#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bmui/matrix.hpp"

namespace bmui {

/// Uniformly sampled multi-channel series. One row of `data` per channel.
/// Construction validates: rate > 0, at least one channel and one sample,
/// one name per row, all values finite.
class MultiChannelSignal {
 public:
  MultiChannelSignal() = default;
  MultiChannelSignal(double rate_hz, std::vector<std::string> channel_names, Matrix data);

  double rate_hz() const noexcept { return rate_hz_; }
  const std::vector<std::string>& channel_names() const noexcept { return names_; }
  const Matrix& data() const noexcept { return data_; }
  std::size_t n_channels() const noexcept { return data_.rows(); }
  std::size_t n_samples() const noexcept { return data_.cols(); }
  double duration_s() const noexcept { return static_cast<double>(n_samples()) / rate_hz_; }

  // Samples [begin, end); keeps rate and names.
  MultiChannelSignal slice(std::size_t begin, std::size_t end) const;
  MultiChannelSignal with_data(Matrix data) const;

  friend bool operator==(const MultiChannelSignal&, const MultiChannelSignal&) = default;

 private:
  double rate_hz_ = 0.0;
  std::vector<std::string> names_;
  Matrix data_;
};

struct MovementLabel {
  int trial_index = 0;
  std::string label;
  friend bool operator==(const MovementLabel&, const MovementLabel&) = default;
};

struct RawSession {
  std::string subject_id;
  MultiChannelSignal eeg;
  MultiChannelSignal emg;
  MultiChannelSignal force;
  std::vector<MovementLabel> movement_labels;
  friend bool operator==(const RawSession&, const RawSession&) = default;
};

inline constexpr double kAlignedRateHz = 1000.0;

struct AlignedSession {
  double rate_hz = kAlignedRateHz;
  MultiChannelSignal eeg;
  MultiChannelSignal emg;
  MultiChannelSignal force;
  std::vector<MovementLabel> movement_labels;

  std::size_t n_samples() const noexcept { return eeg.n_samples(); }
  AlignedSession slice(std::size_t begin, std::size_t end) const;
  friend bool operator==(const AlignedSession&, const AlignedSession&) = default;
};

/// Output length of a linear upsample from `n_in` samples at `source_hz` to `target_hz`.
std::size_t resampled_length(std::size_t n_in, double source_hz, double target_hz);

/// Linear-interpolation upsampling onto the target grid; first sample preserved.
/// Throws invalid_argument for non-positive rates, unsupported_downsample if target < source.
MultiChannelSignal resample(const MultiChannelSignal& sig, double target_rate_hz);

/// Brings EEG, EMG and force onto the common 1000 Hz grid and truncates to
/// the shortest modality.
AlignedSession align(const RawSession& raw);

/// Views an aligned session as a raw one (all modalities at 1000 Hz).
RawSession as_raw(const AlignedSession& aligned, std::string subject_id = {});

}  // namespace bmui
