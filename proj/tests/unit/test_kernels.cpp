#include <cmath>
#include <random>
#include <tuple>
#include <vector>

#include "bmui/kernels.hpp"
#include "doctest.h"

using namespace bmui::kernels;

namespace {

std::vector<double> randn(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

std::vector<const KernelTable*> variants() {
  std::vector<const KernelTable*> out;
  if (const auto* t = avx2_table()) out.push_back(t);
  if (const auto* t = neon_table()) out.push_back(t);
  return out;
}

// FMA and lane-split summation reorder roundoff; bound relative to sum |a_i b_i|.
void check_close(double got, double want, double scale) {
  CHECK(std::abs(got - want) <= 1e-13 * std::max(1.0, scale));
}

}  // namespace

TEST_CASE("scalar reference kernels") {
  const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
  CHECK(scalar_table().dot(a, b, 3) == 32.0);
  double y[] = {1, 1, 1};
  scalar_table().axpy(2.0, a, y, 3);
  CHECK(y[2] == 7.0);

  // [1 2; 3 4] * [5 6; 7 8]^T
  const double A[] = {1, 2, 3, 4}, B[] = {5, 6, 7, 8};
  double C[4] = {};
  scalar_table().gemm_nt(2, 2, 2, A, B, C, false);
  CHECK(C[0] == 17.0);
  CHECK(C[1] == 23.0);
  CHECK(C[2] == 39.0);
  CHECK(C[3] == 53.0);
  double D[4] = {};
  scalar_table().gemm_nn_acc(2, 2, 2, A, B, D);  // [1 2;3 4]*[5 6;7 8]
  CHECK(D[0] == 19.0);
  CHECK(D[3] == 50.0);
  double E[4] = {};
  scalar_table().gemm_tn_acc(2, 2, 2, A, B, E);  // [1 3;2 4]*[5 6;7 8]
  CHECK(E[0] == 26.0);
  CHECK(E[3] == 44.0);
}

TEST_CASE("SIMD variants agree with the scalar reference") {
  const auto tables = variants();
  if (tables.empty()) {
    MESSAGE("no SIMD variant available on this host; scalar only");
    return;
  }
  std::mt19937_64 rng(2024);
  const auto& ref = scalar_table();
  for (const auto* t : tables) {
    CAPTURE(to_string(t->isa));
    for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 63, 64, 65, 160, 257}) {
      auto a = randn(rng, n), b = randn(rng, n);
      double scale = 0.0;
      for (std::size_t i = 0; i < n; ++i) scale += std::abs(a[i] * b[i]);
      check_close(t->dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), scale);

      auto y1 = randn(rng, n);
      auto y2 = y1;
      t->axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) check_close(y1[i], y2[i], std::abs(y2[i]) + 1.0);
    }
    using Shape = std::tuple<std::size_t, std::size_t, std::size_t>;
    for (auto [m, n, k] : std::vector<Shape>{{1, 1, 1}, {3, 5, 7}, {20, 192, 64}, {20, 64, 256}, {9, 13, 33}}) {
      auto A = randn(rng, std::size_t(m * k)), B = randn(rng, std::size_t(n * k));
      std::vector<double> C1(std::size_t(m * n), 0.5), C2 = C1;
      t->gemm_nt(m, n, k, A.data(), B.data(), C1.data(), true);
      ref.gemm_nt(m, n, k, A.data(), B.data(), C2.data(), true);
      for (std::size_t i = 0; i < C1.size(); ++i) check_close(C1[i], C2[i], 4.0 * k);

      auto Bnn = randn(rng, std::size_t(k * n));
      std::vector<double> D1(std::size_t(m * n), 0.0), D2 = D1;
      t->gemm_nn_acc(m, n, k, A.data(), Bnn.data(), D1.data());
      ref.gemm_nn_acc(m, n, k, A.data(), Bnn.data(), D2.data());
      for (std::size_t i = 0; i < D1.size(); ++i) check_close(D1[i], D2[i], 4.0 * k);

      auto At = randn(rng, std::size_t(k * m));
      std::vector<double> E1(std::size_t(m * n), 0.0), E2 = E1;
      t->gemm_tn_acc(m, n, k, At.data(), Bnn.data(), E1.data());
      ref.gemm_tn_acc(m, n, k, At.data(), Bnn.data(), E2.data());
      for (std::size_t i = 0; i < E1.size(); ++i) check_close(E1[i], E2[i], 4.0 * k);
    }
  }
}

TEST_CASE("runtime selection") {
  const Isa before = active().isa;
  CHECK(set_isa(Isa::scalar));
  CHECK(active().isa == Isa::scalar);
  if (avx2_table() != nullptr) {
    CHECK(set_isa(Isa::avx2));
    CHECK(active().isa == Isa::avx2);
  } else {
    CHECK_FALSE(set_isa(Isa::avx2));
    CHECK(active().isa == Isa::scalar);
  }
  set_isa(before);
}
