#include "bmui/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bmui/error.hpp"

namespace bmui::dsp {
namespace {

using cplx = std::complex<double>;

cplx bilinear(cplx s, double two_fs) { return (two_fs + s) / (two_fs - s); }

double prewarp(double f_hz, double rate_hz) {
  return 2.0 * rate_hz * std::tan(std::numbers::pi * f_hz / rate_hz);
}

// Normalized analog Butterworth poles in the left half plane.
std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

cplx section_response(const Biquad& s, cplx z_inv) {
  const cplx num = s.b0 + z_inv * (s.b1 + z_inv * s.b2);
  const cplx den = 1.0 + z_inv * (s.a1 + z_inv * s.a2);
  return num / den;
}

void validate(const FilterDesign& d) {
  if (!(d.rate_hz > 0.0)) throw Error(ErrorCode::invalid_design, "sample rate must be positive");
  if (d.order % 2 != 0) throw Error(ErrorCode::unsupported, "odd filter order");
  if (d.order < 2 || d.order > 8) throw Error(ErrorCode::unsupported, "order must be 2, 4, 6 or 8");
  const double nyquist = d.rate_hz / 2.0;
  auto in_range = [&](double f) { return f > 0.0 && f < nyquist; };
  if (!in_range(d.low_hz)) throw Error(ErrorCode::invalid_design, "corner outside (0, Nyquist)");
  if (d.kind != FilterKind::lowpass) {
    if (!in_range(d.high_hz)) throw Error(ErrorCode::invalid_design, "corner outside (0, Nyquist)");
    if (!(d.high_hz > d.low_hz)) throw Error(ErrorCode::invalid_design, "corners must increase");
  }
}

}  // namespace

BiquadCascade design_butterworth(const FilterDesign& design) {
  validate(design);
  const double two_fs = 2.0 * design.rate_hz;
  const auto proto = prototype_poles(design.order);

  std::vector<cplx> analog;
  double ref_omega = 0.0;  // digital frequency where each section is normalized to unit gain
  double zero_b1 = 0.0;    // numerator of every section is [1, zero_b1, zero_b2]
  double zero_b2 = 1.0;

  if (design.kind == FilterKind::lowpass) {
    const double wc = prewarp(design.low_hz, design.rate_hz);
    for (auto p : proto) analog.push_back(wc * p);
    zero_b1 = 2.0;  // double zero at z = -1
    zero_b2 = 1.0;
  } else {
    const double w1 = prewarp(design.low_hz, design.rate_hz);
    const double w2 = prewarp(design.high_hz, design.rate_hz);
    const double w0 = std::sqrt(w1 * w2);
    const double bw = w2 - w1;
    for (auto p : proto) {
      const cplx half = design.kind == FilterKind::bandpass ? p * bw / 2.0 : (bw / 2.0) / p;
      const cplx root = std::sqrt(half * half - w0 * w0);
      analog.push_back(half + root);
      analog.push_back(half - root);
    }
    const double omega0 = 2.0 * std::atan(w0 / two_fs);
    if (design.kind == FilterKind::bandpass) {
      ref_omega = omega0;
      zero_b1 = 0.0;  // zeros at z = +1 and z = -1
      zero_b2 = -1.0;
    } else {
      zero_b1 = -2.0 * std::cos(omega0);  // zero pair on the unit circle at the notch
      zero_b2 = 1.0;
    }
  }

  std::vector<cplx> upper;
  for (auto s : analog) {
    const cplx z = bilinear(s, two_fs);
    if (z.imag() > 0.0) upper.push_back(z);
  }
  if (upper.size() * 2 != analog.size()) {
    throw Error(ErrorCode::invalid_design, "pole pairing failed");
  }
  std::sort(upper.begin(), upper.end(),
            [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });

  BiquadCascade cascade;
  cascade.design = design;
  const cplx z_ref_inv = std::polar(1.0, -ref_omega);
  for (auto p : upper) {
    Biquad s{1.0, zero_b1, zero_b2, -2.0 * p.real(), std::norm(p)};
    const double g = 1.0 / std::abs(section_response(s, z_ref_inv));
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
    cascade.sections.push_back(s);
  }
  if (max_pole_radius(cascade) >= 1.0 - 1e-6) {
    throw Error(ErrorCode::invalid_design, "designed cascade is not stable");
  }
  return cascade;
}

BiquadCascade design_butterworth(FilterKind kind, int order, double low_hz, double high_hz,
                                 double rate_hz) {
  return design_butterworth(FilterDesign{kind, order, low_hz, high_hz, rate_hz});
}

std::complex<double> frequency_response(const BiquadCascade& cascade, double freq_hz) {
  const double omega = 2.0 * std::numbers::pi * freq_hz / cascade.design.rate_hz;
  const cplx z_inv = std::polar(1.0, -omega);
  cplx h = 1.0;
  for (const auto& s : cascade.sections) h *= section_response(s, z_inv);
  return h;
}

double magnitude_db(const BiquadCascade& cascade, double freq_hz) {
  return 20.0 * std::log10(std::abs(frequency_response(cascade, freq_hz)));
}

double max_pole_radius(const BiquadCascade& cascade) {
  double r = 0.0;
  for (const auto& s : cascade.sections) {
    // Roots of z^2 + a1 z + a2.
    const cplx disc = std::sqrt(cplx(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
    r = std::max({r, std::abs((-s.a1 + disc) / 2.0), std::abs((-s.a1 - disc) / 2.0)});
  }
  return r;
}

StreamingFilterState::StreamingFilterState(BiquadCascade cascade, std::size_t n_channels)
    : cascade_(std::move(cascade)),
      n_channels_(n_channels),
      registers_(n_channels * cascade_.sections.size() * 2, 0.0) {}

void StreamingFilterState::reset() { std::fill(registers_.begin(), registers_.end(), 0.0); }

void StreamingFilterState::process_channel(std::size_t channel, std::span<double> samples) {
  const std::size_t n_sec = cascade_.sections.size();
  double* regs = registers_.data() + channel * n_sec * 2;
  for (std::size_t k = 0; k < n_sec; ++k) {
    const Biquad& s = cascade_.sections[k];
    double s1 = regs[2 * k];
    double s2 = regs[2 * k + 1];
    for (double& x : samples) {
      const double in = x;
      const double y = s.b0 * in + s1;
      s1 = s.b1 * in - s.a1 * y + s2;
      s2 = s.b2 * in - s.a2 * y;
      x = y;
    }
    regs[2 * k] = s1;
    regs[2 * k + 1] = s2;
  }
}

Matrix StreamingFilterState::process(const Matrix& chunk) {
  if (chunk.rows() != n_channels_) {
    throw Error(ErrorCode::invalid_argument, "chunk channel count does not match filter state");
  }
  Matrix out = chunk;
  for (std::size_t c = 0; c < n_channels_; ++c) process_channel(c, out.row(c));
  return out;
}

Matrix filter_streaming(StreamingFilterState& state, const Matrix& chunk) {
  return state.process(chunk);
}

MultiChannelSignal filter_causal(const BiquadCascade& cascade, const MultiChannelSignal& sig) {
  if (sig.rate_hz() != cascade.design.rate_hz) {
    throw Error(ErrorCode::invalid_argument, "signal rate does not match filter design rate");
  }
  StreamingFilterState state(cascade, sig.n_channels());
  return sig.with_data(state.process(sig.data()));
}

std::size_t zero_phase_padding(const BiquadCascade& cascade) noexcept {
  return 3 * static_cast<std::size_t>(2 * cascade.design.order);
}

MultiChannelSignal filter_zero_phase(const BiquadCascade& cascade, const MultiChannelSignal& sig) {
  if (sig.rate_hz() != cascade.design.rate_hz) {
    throw Error(ErrorCode::invalid_argument, "signal rate does not match filter design rate");
  }
  const std::size_t pad = zero_phase_padding(cascade);
  const std::size_t n = sig.n_samples();
  if (n <= pad) throw Error(ErrorCode::signal_too_short, "signal shorter than edge padding");

  StreamingFilterState state(cascade, 1);
  Matrix out(sig.n_channels(), n);
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t c = 0; c < sig.n_channels(); ++c) {
    auto x = sig.data().row(c);
    // Odd reflection about each end sample.
    for (std::size_t i = 0; i < pad; ++i) {
      ext[i] = 2.0 * x[0] - x[pad - i];
      ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));

    state.reset();
    state.process_channel(0, ext);
    std::reverse(ext.begin(), ext.end());
    state.reset();
    state.process_channel(0, ext);
    std::reverse(ext.begin(), ext.end());

    std::copy_n(ext.begin() + static_cast<std::ptrdiff_t>(pad), n, out.row(c).begin());
  }
  return sig.with_data(std::move(out));
}

void car_in_place(Matrix& data) {
  const std::size_t n_ch = data.rows();
  const std::size_t n = data.cols();
  if (n_ch == 0) return;
  std::vector<double> mean(n, 0.0);
  for (std::size_t c = 0; c < n_ch; ++c) {
    auto row = data.row(c);
    for (std::size_t t = 0; t < n; ++t) mean[t] += row[t];
  }
  const double inv = 1.0 / static_cast<double>(n_ch);
  for (double& m : mean) m *= inv;
  for (std::size_t c = 0; c < n_ch; ++c) {
    auto row = data.row(c);
    for (std::size_t t = 0; t < n; ++t) row[t] -= mean[t];
  }
}

MultiChannelSignal car(const MultiChannelSignal& sig) {
  Matrix data = sig.data();
  car_in_place(data);
  return sig.with_data(std::move(data));
}

BiquadCascade eeg_bandpass(double rate_hz) {
  return design_butterworth(FilterKind::bandpass, kPipelineOrder, kEegBandLowHz, kEegBandHighHz,
                            rate_hz);
}

BiquadCascade emg_bandpass(double rate_hz) {
  return design_butterworth(FilterKind::bandpass, kPipelineOrder, kEmgBandLowHz, kEmgBandHighHz,
                            rate_hz);
}

BiquadCascade emg_notch(double rate_hz) {
  return design_butterworth(FilterKind::bandstop, kPipelineOrder, kNotchLowHz, kNotchHighHz,
                            rate_hz);
}

BiquadCascade envelope_lowpass(double rate_hz) {
  return design_butterworth(FilterKind::lowpass, kPipelineOrder, kEnvelopeCutoffHz, 0.0, rate_hz);
}

namespace {

Matrix rectified(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.values()) v = std::abs(v);
  return out;
}

MultiChannelSignal clamp_non_negative(MultiChannelSignal sig) {
  Matrix data = sig.data();
  for (double& v : data.values()) v = std::max(v, 0.0);
  return sig.with_data(std::move(data));
}

}  // namespace

MultiChannelSignal emg_envelope(const MultiChannelSignal& sig) {
  const auto lp = envelope_lowpass(sig.rate_hz());
  return clamp_non_negative(filter_zero_phase(lp, sig.with_data(rectified(sig.data()))));
}

MultiChannelSignal emg_envelope_causal(const MultiChannelSignal& sig) {
  const auto lp = envelope_lowpass(sig.rate_hz());
  return clamp_non_negative(filter_causal(lp, sig.with_data(rectified(sig.data()))));
}

MultiChannelSignal preprocess_eeg(const MultiChannelSignal& sig) {
  return filter_zero_phase(eeg_bandpass(sig.rate_hz()), car(sig));
}

MultiChannelSignal preprocess_eeg_causal(const MultiChannelSignal& sig) {
  return filter_causal(eeg_bandpass(sig.rate_hz()), car(sig));
}

MultiChannelSignal preprocess_emg(const MultiChannelSignal& sig) {
  if (sig.rate_hz() != kAlignedRateHz) {
    throw Error(ErrorCode::invalid_rate, "EMG preprocessing requires 1000 Hz");
  }
  auto band = filter_zero_phase(emg_bandpass(sig.rate_hz()), sig);
  return filter_zero_phase(emg_notch(sig.rate_hz()), band);
}

EegStreamPreprocessor::EegStreamPreprocessor(std::size_t n_channels, double rate_hz)
    : filter_(eeg_bandpass(rate_hz), n_channels) {}

Matrix EegStreamPreprocessor::process(const Matrix& chunk) {
  Matrix data = chunk;
  car_in_place(data);
  return filter_.process(data);
}

}  // namespace bmui::dsp
