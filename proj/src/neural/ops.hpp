#pragma once

// Row-major building blocks with hand-written backward passes. Activations
// are [rows x features]; weights are [out x in].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>

#include "bmui/kernels.hpp"

namespace bmui::neural::ops {

inline constexpr double kLayerNormEps = 1e-5;

// y = x W^T (+ b)
inline void linear_forward(std::size_t rows, std::size_t in, std::size_t out, const double* x,
                           const double* w, const double* b, double* y) {
  kernels::gemm_nt(rows, out, in, x, w, y, false);
  if (b) {
    for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, b, y + r * out, out);
  }
}

// dW += dy^T x, db += colsum(dy), dx += dy W (each optional).
inline void linear_backward(std::size_t rows, std::size_t in, std::size_t out, const double* x,
                            const double* w, const double* dy, double* dw, double* db, double* dx) {
  if (dw) kernels::gemm_tn_acc(out, in, rows, dy, x, dw);
  if (db) {
    for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, dy + r * out, db, out);
  }
  if (dx) kernels::gemm_nn_acc(rows, in, out, dy, w, dx);
}

inline void layernorm_forward(std::size_t rows, std::size_t n, const double* x, const double* gamma,
                              const double* beta, double* y, double* xhat, double* inv_std) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += xr[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (xr[i] - mean) * is;
      xhat[r * n + i] = h;
      y[r * n + i] = gamma[i] * h + beta[i];
    }
  }
}

// Writes dx (not accumulated); accumulates dgamma, dbeta.
inline void layernorm_backward(std::size_t rows, std::size_t n, const double* dy, const double* xhat,
                               const double* inv_std, const double* gamma, double* dgamma,
                               double* dbeta, double* dx) {
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * n;
    const double* hr = xhat + r * n;
    double mean_dh = 0.0, mean_dh_h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dh = dyr[i] * gamma[i];
      dgamma[i] += dyr[i] * hr[i];
      dbeta[i] += dyr[i];
      mean_dh += dh;
      mean_dh_h += dh * hr[i];
    }
    mean_dh *= inv_n;
    mean_dh_h *= inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      dx[r * n + i] = inv_std[r] * (dyr[i] * gamma[i] - mean_dh - hr[i] * mean_dh_h);
    }
  }
}

// Tanh approximation of GELU.
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

inline double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

inline void softmax_rows(std::size_t rows, std::size_t n, double* s) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* sr = s + r * n;
    const double mx = *std::max_element(sr, sr + n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sr[i] = std::exp(sr[i] - mx);
      sum += sr[i];
    }
    for (std::size_t i = 0; i < n; ++i) sr[i] /= sum;
  }
}

// dS = A * (dA - rowsum(dA * A)); in place over dA.
inline void softmax_backward(std::size_t rows, std::size_t n, const double* a, double* da) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ar = a + r * n;
    double* dr = da + r * n;
    const double s = kernels::dot(ar, dr, n);
    for (std::size_t i = 0; i < n; ++i) dr[i] = ar[i] * (dr[i] - s);
  }
}

}  // namespace bmui::neural::ops
