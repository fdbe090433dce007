#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "bmui/dsp.hpp"
#include "bmui/error.hpp"
#include "doctest.h"
#include "filter_oracle.hpp"
#include "test_util.hpp"

using namespace bmui;
using namespace bmui::dsp;
using testutil::code_of;

namespace {

MultiChannelSignal sine(double f, double amp, double seconds, double rate = 1000.0,
                        std::size_t channels = 1) {
  const auto n = static_cast<std::size_t>(seconds * rate);
  Matrix m(channels, n);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < n; ++t)
      m(c, t) = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / rate);
  return MultiChannelSignal(rate, std::vector<std::string>(channels, "c"), std::move(m));
}

MultiChannelSignal noise(std::mt19937_64& rng, std::size_t ch, std::size_t n, double rate = 1000.0) {
  std::normal_distribution<double> g;
  Matrix m(ch, n);
  for (double& v : m.values()) v = g(rng);
  return MultiChannelSignal(rate, std::vector<std::string>(ch, "c"), std::move(m));
}

std::vector<double> values_of(const MultiChannelSignal& s) { return s.data().values(); }

}  // namespace

TEST_CASE("car examples") {
  auto s = MultiChannelSignal(1.0, {"a", "b", "c"}, Matrix(3, 1, {1.0, 2.0, 3.0}));
  auto out = car(s);
  CHECK(out.data()(0, 0) == -1.0);
  CHECK(out.data()(1, 0) == 0.0);
  CHECK(out.data()(2, 0) == 1.0);

  auto same = MultiChannelSignal(1.0, {"a", "b"}, Matrix(2, 2, {4.0, -1.0, 4.0, -1.0}));
  for (double v : values_of(car(same))) CHECK(v == 0.0);

  auto single = MultiChannelSignal(1.0, {"a"}, Matrix(1, 3, {1.0, 5.0, -2.0}));
  for (double v : values_of(car(single))) CHECK(v == 0.0);
}

TEST_CASE("car zero-sum property") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    auto s = noise(rng, 16, 200);
    auto out = car(s);
    for (std::size_t t = 0; t < out.n_samples(); ++t) {
      double sum = 0.0, scale = 0.0;
      for (std::size_t c = 0; c < 16; ++c) {
        sum += out.data()(c, t);
        scale = std::max(scale, std::abs(s.data()(c, t)));
      }
      CHECK(std::abs(sum) <= 1e-9 * scale);
    }
  }
}

TEST_CASE("butterworth design matches the analog prototype oracle") {
  struct Case {
    FilterKind kind;
    int order;
    double lo, hi;
  };
  for (const Case& c : {Case{FilterKind::bandpass, 4, 15, 35}, Case{FilterKind::bandpass, 2, 15, 35},
                        Case{FilterKind::bandstop, 4, 48, 52}, Case{FilterKind::bandpass, 4, 20, 450},
                        Case{FilterKind::lowpass, 4, 10, 0}, Case{FilterKind::lowpass, 8, 100, 0},
                        Case{FilterKind::bandstop, 6, 100, 200}}) {
    auto cascade = design_butterworth(c.kind, c.order, c.lo, c.hi, 1000.0);
    CHECK(max_pole_radius(cascade) < 1.0 - 1e-6);
    const std::size_t expected_sections =
        c.kind == FilterKind::lowpass ? std::size_t(c.order / 2) : std::size_t(c.order);
    CHECK(cascade.sections.size() == expected_sections);
    for (double f = 0.5; f < 500.0; f += 3.7) {
      const double want = oracle::butterworth_magnitude(c.kind, c.order, c.lo, c.hi, 1000.0, f);
      const double got = std::abs(frequency_response(cascade, f));
      CHECK(std::abs(got - want) <= 1e-7 * std::max(want, 1e-6));
    }
  }
}

TEST_CASE("butterworth design examples") {
  auto bp = eeg_bandpass(1000.0);
  CHECK(magnitude_db(bp, 25.0) >= -3.0);
  CHECK(std::abs(frequency_response(bp, 0.0)) <= 0.01);  // -40 dB
  CHECK(magnitude_db(bp, 5.0) <= -20.0);
  CHECK(magnitude_db(bp, std::sqrt(15.0 * 35.0)) >= -3.0);

  auto bs = emg_notch(1000.0);
  CHECK(magnitude_db(bs, 50.0) <= -20.0);
  CHECK(magnitude_db(bs, 30.0) >= -3.0);

  // Frozen from scipy.signal.butter(..., output="sos") + sosfreqz.
  CHECK(std::abs(frequency_response(bp, 5.0)) == doctest::Approx(0.00161014106201).epsilon(1e-8));
  CHECK(std::abs(frequency_response(bp, 25.0)) == doctest::Approx(0.999998798811).epsilon(1e-9));
  CHECK(std::abs(frequency_response(bs, 49.0)) == doctest::Approx(0.0553327888557).epsilon(1e-8));
  CHECK(std::abs(frequency_response(emg_bandpass(1000.0), 10.0)) ==
        doctest::Approx(0.060297559547).epsilon(1e-8));
  CHECK(std::abs(frequency_response(envelope_lowpass(1000.0), 20.0)) ==
        doctest::Approx(0.062133181026).epsilon(1e-8));
}

TEST_CASE("butterworth design errors") {
  CHECK(code_of([] { design_butterworth(FilterKind::bandpass, 4, 15, 500, 1000); }) ==
        ErrorCode::invalid_design);
  CHECK(code_of([] { design_butterworth(FilterKind::lowpass, 4, 600, 0, 1000); }) ==
        ErrorCode::invalid_design);
  CHECK(code_of([] { design_butterworth(FilterKind::bandpass, 3, 15, 35, 1000); }) ==
        ErrorCode::unsupported);
}

TEST_CASE("zero-phase filtering examples") {
  auto bp = eeg_bandpass(1000.0);
  auto zeros = MultiChannelSignal(1000.0, {"a"}, Matrix(1, 500, 0.0));
  for (double v : values_of(filter_zero_phase(bp, zeros))) CHECK(v == 0.0);

  auto out = filter_zero_phase(bp, sine(25.0, 1.0, 2.0));
  CHECK(out.n_samples() == 2000);
  const double amp = oracle::sine_amplitude(out.data().row(0), 25.0, 1000.0, 600, 1400);
  const double h = oracle::butterworth_magnitude(FilterKind::bandpass, 4, 15, 35, 1000, 25);
  CHECK(amp >= 0.71);
  CHECK(amp <= 1.0);
  CHECK(amp == doctest::Approx(h * h).epsilon(1e-3));

  // The 4 Hz stop band rings for seconds; measure well away from both edges.
  auto notched = filter_zero_phase(emg_notch(1000.0), sine(50.0, 1.0, 8.0));
  CHECK(oracle::peak(notched.data().row(0), 3000, 5000) <= 0.01);

  CHECK(code_of([&] { filter_zero_phase(bp, sine(25.0, 1.0, 2.0, 500.0)); }) ==
        ErrorCode::invalid_argument);
  auto tiny = MultiChannelSignal(1000.0, {"a"}, Matrix(1, 24, 1.0));
  CHECK(code_of([&] { filter_zero_phase(bp, tiny); }) == ErrorCode::signal_too_short);
}

TEST_CASE("zero-phase filtering of a symmetric pulse stays symmetric") {
  const std::size_t n = 2001, center = 1000;
  Matrix m(1, n);
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = (static_cast<double>(t) - center) / 1000.0;
    m(0, t) = std::exp(-dt * dt / (2 * 0.03 * 0.03)) * std::cos(2 * std::numbers::pi * 25 * dt);
  }
  auto out = filter_zero_phase(eeg_bandpass(1000.0), MultiChannelSignal(1000.0, {"a"}, m));
  auto row = out.data().row(0);
  const auto peak_at = static_cast<std::size_t>(
      std::max_element(row.begin(), row.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) -
      row.begin());
  CHECK(std::abs(static_cast<long>(peak_at) - static_cast<long>(center)) <= 1);
  for (std::size_t k = 1; k < 300; ++k) {
    CHECK(row[center - k] == doctest::Approx(row[center + k]).epsilon(1e-3).scale(1.0));
  }
}

TEST_CASE("filters are linear") {
  std::mt19937_64 rng(9);
  auto bp = eeg_bandpass(1000.0);
  for (int i = 0; i < 5; ++i) {
    auto x = noise(rng, 2, 800), y = noise(rng, 2, 800);
    const double a = 1.7, b = -0.3;
    Matrix mix(2, 800);
    for (std::size_t k = 0; k < mix.size(); ++k)
      mix.values()[k] = a * x.data().values()[k] + b * y.data().values()[k];
    auto fx = filter_zero_phase(bp, x), fy = filter_zero_phase(bp, y);
    auto fmix = filter_zero_phase(bp, x.with_data(mix));
    for (std::size_t k = 0; k < mix.size(); ++k) {
      const double want = a * fx.data().values()[k] + b * fy.data().values()[k];
      CHECK(std::abs(fmix.data().values()[k] - want) <= 1e-8);
    }
  }
}

TEST_CASE("streaming equals single-pass causal filtering") {
  std::mt19937_64 rng(21);
  auto bp = eeg_bandpass(1000.0);
  auto sig = noise(rng, 3, 1000);
  auto whole = filter_causal(bp, sig);

  SUBCASE("one-sample chunks") {
    StreamingFilterState state(bp, 3);
    for (std::size_t t = 0; t < 1000; ++t) {
      auto y = filter_streaming(state, sig.data().col_slice(t, t + 1));
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(y(c, 0) - whole.data()(c, t)) <= 1e-9);
    }
  }
  SUBCASE("random partitions") {
    std::uniform_int_distribution<std::size_t> len(1, 97);
    for (int p = 0; p < 20; ++p) {
      StreamingFilterState state(bp, 3);
      std::size_t t = 0;
      double worst = 0.0;
      while (t < 1000) {
        const std::size_t end = std::min<std::size_t>(1000, t + len(rng));
        auto y = state.process(sig.data().col_slice(t, end));
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t k = 0; k < y.cols(); ++k)
            worst = std::max(worst, std::abs(y(c, k) - whole.data()(c, t + k)));
        t = end;
      }
      CHECK(worst <= 1e-9);
    }
  }
  SUBCASE("zero chunks stay zero") {
    StreamingFilterState state(bp, 2);
    for (int i = 0; i < 5; ++i)
      for (double v : std::vector<double>(state.process(Matrix(2, 10, 0.0)).values())) CHECK(v == 0.0);
  }
  SUBCASE("channel mismatch") {
    StreamingFilterState state(bp, 2);
    CHECK(code_of([&] { state.process(Matrix(3, 4)); }) == ErrorCode::invalid_argument);
  }
}

TEST_CASE("streaming impulse response equals the direct-form recurrence") {
  auto bp = eeg_bandpass(1000.0);
  std::vector<double> impulse(400, 0.0);
  impulse[0] = 1.0;
  StreamingFilterState state(bp, 1);
  auto y = state.process(Matrix(1, impulse.size(), impulse));
  auto ref = oracle::direct_form_response(bp, impulse);
  for (std::size_t t = 0; t < impulse.size(); ++t) CHECK(std::abs(y(0, t) - ref[t]) <= 1e-9);
  // scipy.signal.sosfilt on the same design.
  const double frozen[] = {1.32937288987529e-05, 0.000100929432374547, 0.000376779154887588,
                           0.000949597266604919, 0.00186529019553797,  0.00309610849716114};
  for (std::size_t t = 0; t < 6; ++t) CHECK(y(0, t) == doctest::Approx(frozen[t]).epsilon(1e-9));
}

TEST_CASE("emg envelope") {
  auto zeros = MultiChannelSignal(1000.0, {"a"}, Matrix(1, 500, 0.0));
  for (double v : values_of(emg_envelope(zeros))) CHECK(v == 0.0);

  auto constant = MultiChannelSignal(1000.0, {"a"}, Matrix(1, 3000, 2.5));
  auto env_c = emg_envelope(constant);
  CHECK(env_c.data()(0, 1500) == doctest::Approx(2.5).epsilon(1e-6));

  const double a = 3.0;
  auto env = emg_envelope(sine(100.0, a, 3.0));
  const double want = 2.0 * a / std::numbers::pi;
  for (std::size_t t = 1000; t < 2000; t += 50) {
    CHECK(env.data()(0, t) == doctest::Approx(want).epsilon(0.10));
  }
  std::mt19937_64 rng(1);
  for (double v : values_of(emg_envelope(noise(rng, 2, 2000)))) CHECK(v >= 0.0);
  for (double v : values_of(emg_envelope_causal(noise(rng, 2, 2000)))) CHECK(v >= 0.0);
}

TEST_CASE("eeg preprocessing") {
  auto zeros = MultiChannelSignal(1000.0, {"a", "b"}, Matrix(2, 500, 0.0));
  for (double v : values_of(preprocess_eeg(zeros))) CHECK(v == 0.0);

  auto same = sine(25.0, 3.0, 1.0, 1000.0, 4);
  for (double v : values_of(preprocess_eeg(same))) CHECK(std::abs(v) <= 1e-12);

  std::mt19937_64 rng(77);
  auto x = noise(rng, 16, 2000);
  for (const auto& out : {preprocess_eeg(x), preprocess_eeg_causal(x)}) {
    double worst = 0.0;
    for (std::size_t t = 0; t < out.n_samples(); ++t) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 16; ++c) sum += out.data()(c, t);
      worst = std::max(worst, std::abs(sum));
    }
    CHECK(worst <= 1e-9 * 4.0);
  }
}

TEST_CASE("eeg stream preprocessor equals offline causal preprocessing") {
  std::mt19937_64 rng(8);
  auto x = noise(rng, 16, 1000);
  auto offline = preprocess_eeg_causal(x);
  EegStreamPreprocessor pre(16, 1000.0);
  for (std::size_t t = 0; t < 1000; t += 50) {
    auto y = pre.process(x.data().col_slice(t, t + 50));
    for (std::size_t c = 0; c < 16; ++c)
      for (std::size_t k = 0; k < 50; ++k) CHECK(std::abs(y(c, k) - offline.data()(c, t + k)) <= 1e-9);
  }
}

TEST_CASE("emg preprocessing") {
  auto zeros = MultiChannelSignal(1000.0, {"a"}, Matrix(1, 500, 0.0));
  for (double v : values_of(preprocess_emg(zeros))) CHECK(v == 0.0);

  auto hum = preprocess_emg(sine(50.0, 1.0, 8.0));
  CHECK(oracle::peak(hum.data().row(0), 3000, 5000) <= 0.01);

  auto signal = preprocess_emg(sine(100.0, 1.0, 8.0));
  const double amp = oracle::sine_amplitude(signal.data().row(0), 100.0, 1000.0, 3000, 5000);
  CHECK(amp >= 0.71);
  CHECK(amp <= 1.0);

  CHECK(code_of([] { preprocess_emg(sine(100.0, 1.0, 1.0, 2000.0)); }) == ErrorCode::invalid_rate);
}
