#pragma once

// Test-only references for filter checks. Nothing here calls the design code.

#include <cmath>
#include <numbers>
#include <vector>

#include "bmui/dsp.hpp"

namespace oracle {

// Ideal analog Butterworth magnitude evaluated at the pre-warped frequency,
// which the bilinear transform maps exactly onto the digital response.
inline double butterworth_magnitude(bmui::dsp::FilterKind kind, int order, double low_hz,
                                    double high_hz, double rate_hz, double f_hz) {
  auto warp = [&](double f) { return 2.0 * rate_hz * std::tan(std::numbers::pi * f / rate_hz); };
  const double w = warp(f_hz);
  double ratio = 0.0;
  switch (kind) {
    case bmui::dsp::FilterKind::lowpass:
      ratio = w / warp(low_hz);
      break;
    case bmui::dsp::FilterKind::bandpass: {
      const double w1 = warp(low_hz), w2 = warp(high_hz);
      ratio = (w * w - w1 * w2) / (w * (w2 - w1));
      break;
    }
    case bmui::dsp::FilterKind::bandstop: {
      const double w1 = warp(low_hz), w2 = warp(high_hz);
      ratio = (w * (w2 - w1)) / (w * w - w1 * w2);
      break;
    }
  }
  return 1.0 / std::sqrt(1.0 + std::pow(ratio * ratio, order));
}

// Expands a cascade into one numerator/denominator polynomial and runs the
// textbook direct-form I recurrence.
inline std::vector<double> direct_form_response(const bmui::dsp::BiquadCascade& c,
                                                const std::vector<double>& x) {
  std::vector<double> b{1.0}, a{1.0};
  auto mul = [](const std::vector<double>& p, std::vector<double> q) {
    std::vector<double> r(p.size() + q.size() - 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < q.size(); ++j) r[i + j] += p[i] * q[j];
    return r;
  };
  for (const auto& s : c.sections) {
    b = mul(b, {s.b0, s.b1, s.b2});
    a = mul(a, {1.0, s.a1, s.a2});
  }
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < b.size() && k <= n; ++k) acc += b[k] * x[n - k];
    for (std::size_t k = 1; k < a.size() && k <= n; ++k) acc -= a[k] * y[n - k];
    y[n] = acc;
  }
  return y;
}

// Peak amplitude over samples [begin, end).
inline double peak(std::span<const double> x, std::size_t begin, std::size_t end) {
  double m = 0.0;
  for (std::size_t i = begin; i < end; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

// Least-squares amplitude of a sinusoid at f_hz over [begin, end); the window
// should span an integer number of periods.
inline double sine_amplitude(std::span<const double> x, double f_hz, double rate_hz,
                             std::size_t begin, std::size_t end) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double ph = 2.0 * std::numbers::pi * f_hz * static_cast<double>(i) / rate_hz;
    s += x[i] * std::sin(ph);
    c += x[i] * std::cos(ph);
  }
  const double n = static_cast<double>(end - begin);
  return 2.0 * std::sqrt(s * s + c * c) / n;
}

}  // namespace oracle
