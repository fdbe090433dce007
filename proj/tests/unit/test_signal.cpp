#include <cmath>
#include <random>

#include "bmui/error.hpp"
#include "bmui/signal.hpp"
#include "doctest.h"

using namespace bmui;

namespace {

MultiChannelSignal one_channel(double rate, std::vector<double> v) {
  const auto n = v.size();
  return MultiChannelSignal(rate, {"c0"}, Matrix(1, n, std::move(v)));
}

MultiChannelSignal random_signal(std::mt19937_64& rng, std::size_t ch, std::size_t n, double rate) {
  std::normal_distribution<double> g;
  Matrix m(ch, n);
  for (double& v : m.values()) v = g(rng);
  std::vector<std::string> names;
  for (std::size_t c = 0; c < ch; ++c) names.push_back("ch" + std::to_string(c));
  return MultiChannelSignal(rate, names, std::move(m));
}

}  // namespace

TEST_CASE("signal invariants are enforced at construction") {
  CHECK_THROWS_AS(MultiChannelSignal(0.0, {"a"}, Matrix(1, 1)), Error);
  CHECK_THROWS_AS(MultiChannelSignal(10.0, {"a", "b"}, Matrix(1, 3)), Error);
  CHECK_THROWS_AS(MultiChannelSignal(10.0, {}, Matrix(0, 0)), Error);
  CHECK_THROWS_AS(one_channel(10.0, {1.0, NAN}), Error);
}

TEST_CASE("resample examples") {
  SUBCASE("constant channel 2 Hz -> 4 Hz") {
    auto out = resample(one_channel(2.0, {5, 5, 5}), 4.0);
    REQUIRE(out.n_samples() == 5);
    for (double v : out.data().values()) CHECK(v == 5.0);
  }
  SUBCASE("ramp 1 Hz -> 2 Hz is exact") {
    auto out = resample(one_channel(1.0, {0, 1}), 2.0);
    REQUIRE(out.n_samples() == 3);
    CHECK(out.data()(0, 0) == 0.0);
    CHECK(out.data()(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out.data()(0, 2) == 1.0);
  }
  SUBCASE("66 force samples at 6.6 Hz -> 9849 at 1000 Hz") {
    std::vector<double> v(66, 1.0);
    CHECK(resample(one_channel(6.6, v), 1000.0).n_samples() == 9849);
  }
  SUBCASE("errors") {
    auto s = one_channel(10.0, {1, 2, 3});
    CHECK_THROWS_AS(resample(s, 0.0), Error);
    try {
      resample(s, 5.0);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::unsupported_downsample);
    }
  }
}

TEST_CASE("resample properties") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_signal(rng, 3, 50 + trial, 500.0);
    CHECK(resample(s, 500.0) == s);

    const double target = 500.0 * (1.0 + 0.37 * trial);
    auto up = resample(s, target);
    for (std::size_t c = 0; c < 3; ++c) {
      auto in = s.data().row(c);
      const auto [lo, hi] = std::minmax_element(in.begin(), in.end());
      CHECK(up.data()(c, 0) == in[0]);
      for (double v : up.data().row(c)) {
        CHECK(v >= *lo);
        CHECK(v <= *hi);
      }
    }
    const double in_span = (s.n_samples() - 1) / s.rate_hz();
    const double out_span = (up.n_samples() - 1) / up.rate_hz();
    CHECK(std::abs(in_span - out_span) <= 1.0 / target + 1e-12);
  }
}

TEST_CASE("align examples") {
  std::mt19937_64 rng(3);
  RawSession raw;
  raw.subject_id = "s";
  raw.eeg = random_signal(rng, 16, 5000, 500.0);
  raw.emg = random_signal(rng, 12, 10003, 1000.0);
  raw.force = MultiChannelSignal(6.6, {"f0", "f1"}, Matrix(2, 66, 0.0));
  raw.movement_labels = {{0, "flex_high"}};

  CHECK(resample(raw.eeg, 1000.0).n_samples() == 9999);
  auto aligned = align(raw);
  CHECK(aligned.n_samples() == 9849);
  CHECK(aligned.emg.n_samples() == 9849);
  CHECK(aligned.force.n_samples() == 9849);
  CHECK(aligned.movement_labels == raw.movement_labels);
  for (double v : aligned.force.data().values()) CHECK(v == 0.0);

  SUBCASE("10 s EEG doubles") {
    RawSession r2 = raw;
    r2.eeg = random_signal(rng, 16, 5001, 500.0);
    CHECK(resample(r2.eeg, 1000.0).n_samples() == 10001);
  }
  SUBCASE("idempotent") {
    auto again = align(as_raw(aligned, "s"));
    CHECK(again == aligned);
  }
  SUBCASE("empty modality") {
    RawSession bad = raw;
    bad.force = MultiChannelSignal();
    try {
      align(bad);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invalid_session);
    }
  }
}
