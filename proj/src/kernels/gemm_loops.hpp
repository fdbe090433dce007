#pragma once

// Matrix loops shared by every ISA variant. Each translation unit instantiates
// them with its own dot/axpy so the inner kernel inlines.

#include <cstddef>
#include <cstring>

namespace bmui::kernels::detail {

template <auto Dot>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = Dot(ai, b + j * k, k);
      ci[j] = accumulate ? ci[j] + v : v;
    }
  }
}

template <auto Axpy>
void gemm_nn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      if (ai[p] != 0.0) Axpy(ai[p], b + p * n, ci, n);
    }
  }
}

template <auto Axpy>
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (ap[i] != 0.0) Axpy(ap[i], bp, c + i * n, n);
    }
  }
}

}  // namespace bmui::kernels::detail
