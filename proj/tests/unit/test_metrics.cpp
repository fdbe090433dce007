#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bmui/error.hpp"
#include "bmui/metrics.hpp"
#include "doctest.h"
#include "stats_oracle.hpp"
#include "test_util.hpp"

using namespace bmui;
using namespace bmui::metrics;
using testutil::code_of;

TEST_CASE("ranks examples") {
  CHECK(ranks(std::vector{10.0, 20.0, 30.0}) == std::vector{1.0, 2.0, 3.0});
  CHECK(ranks(std::vector{1.0, 2.0, 2.0, 3.0}) == std::vector{1.0, 2.5, 2.5, 4.0});
  for (std::size_t n : {1u, 2u, 5u, 8u}) {
    const auto r = ranks(std::vector<double>(n, 3.0));
    for (double v : r) CHECK(v == (static_cast<double>(n) + 1.0) / 2.0);
  }
}

TEST_CASE("ranks with ties match counted ranks exactly") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> small(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(3 + trial % 17);
    for (double& v : x) v = small(rng);
    CHECK(ranks(x) == oracle::counted_ranks(x));
  }
}

TEST_CASE("spearman examples") {
  CHECK(spearman(std::vector{1.0, 2.0, 3.0}, std::vector{10.0, 20.0, 30.0}) == doctest::Approx(1.0));
  CHECK(spearman(std::vector{1.0, 2.0, 3.0}, std::vector{3.0, 2.0, 1.0}) == doctest::Approx(-1.0));
  CHECK(spearman(std::vector{1.0, 2.0, 3.0, 4.0}, std::vector{1.0, 3.0, 2.0, 4.0}) ==
        doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("spearman errors") {
  CHECK(code_of([] { spearman(std::vector{1.0, 2.0}, std::vector{2.0, 1.0}); }) ==
        ErrorCode::insufficient_data);
  CHECK(code_of([] { spearman(std::vector{1.0, 1.0, 1.0}, std::vector{1.0, 2.0, 3.0}); }) ==
        ErrorCode::undefined_correlation);
}

TEST_CASE("spearman equals the no-ties shortcut") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> x(3 + trial % 40), y(x.size());
    for (double& v : x) v = g(rng);
    for (double& v : y) v = g(rng);
    CHECK(std::abs(spearman(x, y) - oracle::spearman_shortcut(x, y)) <= 1e-12);
  }
}

TEST_CASE("spearman symmetry, identity and monotone invariance") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(20), y(20);
    for (double& v : x) v = g(rng);
    for (double& v : y) v = g(rng);
    CHECK(spearman(x, y) == spearman(y, x));
    CHECK(spearman(x, x) == doctest::Approx(1.0).epsilon(1e-15));
    std::vector<double> fx(x.size()), fy(y.size());
    std::transform(x.begin(), x.end(), fx.begin(), [](double v) { return std::exp(v) * 3.0 + 1.0; });
    std::transform(y.begin(), y.end(), fy.begin(), [](double v) { return v * v * v - 7.0; });
    CHECK(spearman(fx, fy) == doctest::Approx(spearman(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("t-test examples") {
  auto sym = one_sample_t_test(std::vector{-1.0, 1.0});
  CHECK(sym.t == 0.0);
  CHECK(sym.p_one_sided == doctest::Approx(0.5).epsilon(1e-12));

  auto r = one_sample_t_test(std::vector{1.0, 2.0, 3.0});
  CHECK(r.df == 2);
  CHECK(r.t == doctest::Approx(3.4641016151377544).epsilon(1e-12));
  CHECK(std::abs(r.p_one_sided - 0.0371) <= 1e-3);
  CHECK(std::abs(r.p_one_sided - oracle::t_upper_tail(r.t, 2.0)) <= 1e-6);

  CHECK(code_of([] { one_sample_t_test(std::vector{5.0, 5.0, 5.0}); }) == ErrorCode::degenerate_sample);
  CHECK(code_of([] { one_sample_t_test(std::vector{5.0}); }) == ErrorCode::insufficient_data);
}

TEST_CASE("t tail matches numeric integration across df") {
  for (double df : {1.0, 2.0, 4.0, 9.0, 30.0}) {
    for (double t : {-2.0, 0.3, 1.0, 2.5, 6.0}) {
      const double ref = t >= 0 ? oracle::t_upper_tail(t, df) : 1.0 - oracle::t_upper_tail(-t, df);
      CHECK(std::abs(student_t_sf(t, df) - ref) <= 1e-6);
    }
  }
}

TEST_CASE("t-test p decreases as the mean grows") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(2 + trial % 10);
    for (double& x : v) x = g(rng);
    double prev = 2.0;
    for (double shift = -1.0; shift <= 1.0; shift += 0.25) {
      std::vector<double> s(v);
      for (double& x : s) x += shift;
      const double p = one_sample_t_test(s).p_one_sided;
      CHECK(p < prev);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      prev = p;
    }
  }
}

TEST_CASE("report on perfect and permuted predictions") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  std::vector<Matrix> truth;
  for (int k = 0; k < 10; ++k) {
    Matrix m(3, 100);
    for (double& v : m.values()) v = g(rng);
    truth.push_back(m);
  }
  auto perfect = build_report(truth, truth);
  for (double s : perfect.per_channel_scc) CHECK(s == doctest::Approx(1.0));
  CHECK(perfect.best_channel_scc == *std::max_element(perfect.per_channel_scc.begin(),
                                                      perfect.per_channel_scc.end()));
  CHECK(perfect.n_windows == 1000);
  CHECK(perfect.n_trials == 10);

  std::vector<Matrix> shuffled = truth;
  for (auto& m : shuffled) {
    for (std::size_t c = 0; c < m.rows(); ++c) {
      auto row = m.row(c);
      std::shuffle(row.begin(), row.end(), rng);
    }
  }
  auto null = build_report(shuffled, truth);
  CHECK(std::abs(null.mean_scc) < 0.1);
  CHECK(null.best_channel_scc == null.per_channel_scc[null.best_channel_index]);
  CHECK(null.p_value_one_sided >= 0.0);
  CHECK(null.p_value_one_sided <= 1.0);

  CHECK(code_of([] { build_report({}, {}); }) == ErrorCode::insufficient_data);
}

TEST_CASE("report json round-trip") {
  std::vector<Matrix> a{Matrix(2, 5, {1, 2, 3, 4, 5, 5, 3, 4, 1, 2})};
  std::vector<Matrix> b{Matrix(2, 5, {1, 3, 2, 4, 5, 1, 2, 3, 4, 5})};
  auto r = build_report(a, b, {"x", "y"});
  auto back = report_from_json(report_to_json(r));
  CHECK(back.per_channel_scc == r.per_channel_scc);
  CHECK(back.best_channel_index == r.best_channel_index);
  CHECK(back.channel_names == r.channel_names);
  CHECK(render_table(r).find("best_channel_scc") != std::string::npos);
}
