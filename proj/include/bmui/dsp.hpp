#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "bmui/matrix.hpp"
#include "bmui/signal.hpp"

namespace bmui::dsp {

enum class FilterKind { lowpass, bandpass, bandstop };

struct FilterDesign {
  FilterKind kind = FilterKind::lowpass;
  int order = 4;          // analog prototype order
  double low_hz = 0.0;    // lowpass: cutoff; band filters: lower corner
  double high_hz = 0.0;   // band filters: upper corner (unused for lowpass)
  double rate_hz = 1000.0;
};

// Second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  FilterDesign design;

  // Number of poles of the realized filter.
  int filter_order() const noexcept { return 2 * static_cast<int>(sections.size()); }
};

/// Butterworth design via bilinear transform with corner pre-warping.
/// Order must be one of {2,4,6,8}; corners strictly inside (0, rate/2).
BiquadCascade design_butterworth(const FilterDesign& design);
BiquadCascade design_butterworth(FilterKind kind, int order, double low_hz, double high_hz,
                                 double rate_hz);

std::complex<double> frequency_response(const BiquadCascade& cascade, double freq_hz);
double magnitude_db(const BiquadCascade& cascade, double freq_hz);

// Largest pole radius over all sections.
double max_pole_radius(const BiquadCascade& cascade);

/// Per-channel, per-section transposed direct-form II registers. Single owner.
class StreamingFilterState {
 public:
  StreamingFilterState(BiquadCascade cascade, std::size_t n_channels);

  const BiquadCascade& cascade() const noexcept { return cascade_; }
  std::size_t n_channels() const noexcept { return n_channels_; }

  // Filters `chunk` ([channels x samples]) and advances the registers.
  Matrix process(const Matrix& chunk);
  // In-place single-channel run used by the batch paths.
  void process_channel(std::size_t channel, std::span<double> samples);
  void reset();

 private:
  BiquadCascade cascade_;
  std::size_t n_channels_;
  std::vector<double> registers_;  // [channel][section][2]
};

Matrix filter_streaming(StreamingFilterState& state, const Matrix& chunk);

// Single causal pass over the whole signal from zero state.
MultiChannelSignal filter_causal(const BiquadCascade& cascade, const MultiChannelSignal& sig);

/// Forward-backward filtering with odd reflective padding of 3*(filter order)
/// samples at each end.
MultiChannelSignal filter_zero_phase(const BiquadCascade& cascade, const MultiChannelSignal& sig);
std::size_t zero_phase_padding(const BiquadCascade& cascade) noexcept;

/// Common average reference: subtracts the cross-channel mean at every sample.
MultiChannelSignal car(const MultiChannelSignal& sig);
void car_in_place(Matrix& data);

// Fixed pipeline designs.
inline constexpr int kPipelineOrder = 4;
inline constexpr double kEegBandLowHz = 15.0;
inline constexpr double kEegBandHighHz = 35.0;
inline constexpr double kEmgBandLowHz = 20.0;
inline constexpr double kEmgBandHighHz = 450.0;
inline constexpr double kNotchLowHz = 48.0;
inline constexpr double kNotchHighHz = 52.0;
inline constexpr double kEnvelopeCutoffHz = 10.0;

BiquadCascade eeg_bandpass(double rate_hz);
BiquadCascade emg_bandpass(double rate_hz);
BiquadCascade emg_notch(double rate_hz);
BiquadCascade envelope_lowpass(double rate_hz);

/// Rectify, 10 Hz order-4 low-pass (zero phase), clamp at 0.
MultiChannelSignal emg_envelope(const MultiChannelSignal& sig);
MultiChannelSignal emg_envelope_causal(const MultiChannelSignal& sig);

/// CAR then 15-35 Hz band-pass, zero phase.
MultiChannelSignal preprocess_eeg(const MultiChannelSignal& sig);
/// Same stages with causal filtering; what the online path computes.
MultiChannelSignal preprocess_eeg_causal(const MultiChannelSignal& sig);

/// 20-450 Hz band-pass then 48-52 Hz band-stop, zero phase. Requires 1000 Hz.
MultiChannelSignal preprocess_emg(const MultiChannelSignal& sig);

/// Causal, chunked EEG preprocessing (CAR + band-pass) for the online loop.
class EegStreamPreprocessor {
 public:
  EegStreamPreprocessor(std::size_t n_channels, double rate_hz);
  Matrix process(const Matrix& chunk);
  void reset() { filter_.reset(); }

 private:
  StreamingFilterState filter_;
};

}  // namespace bmui::dsp
