#pragma once

// Dense double-precision kernels behind the neural stack. Every operation has
// a scalar reference and, where the build and CPU allow, an AVX2+FMA or NEON
// variant; the variant is chosen once at startup and can be pinned with
// BMUI_SIMD=scalar|avx2|neon or set_isa().

#include <cstddef>
#include <string_view>

namespace bmui::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha*x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] (+)= A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                      const double* b, double* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn_acc)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                      const double* b, double* c);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

const KernelTable& active() noexcept;
bool set_isa(Isa isa) noexcept;  // false if unavailable; selection unchanged

inline double dot(const double* a, const double* b, std::size_t n) {
  return active().dot(a, b, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c, bool accumulate = false) {
  active().gemm_nt(m, n, k, a, b, c, accumulate);
}
inline void gemm_nn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        const double* b, double* c) {
  active().gemm_nn_acc(m, n, k, a, b, c);
}
inline void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        const double* b, double* c) {
  active().gemm_tn_acc(m, n, k, a, b, c);
}

}  // namespace bmui::kernels
