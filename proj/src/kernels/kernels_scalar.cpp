#include "bmui/kernels.hpp"
#include "gemm_loops.hpp"

namespace bmui::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{
      Isa::scalar,
      &dot_scalar,
      &axpy_scalar,
      &detail::gemm_nt<dot_scalar>,
      &detail::gemm_nn_acc<axpy_scalar>,
      &detail::gemm_tn_acc<axpy_scalar>,
  };
  return table;
}

}  // namespace bmui::kernels
