#include "pmm/simd/kernels.hpp"

namespace pmm::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void dot4_scalar(const double* a0, const double* a1, const double* a2,
                 const double* a3, const double* b, std::size_t n,
                 double* out) {
  out[0] = dot_scalar(a0, b, n);
  out[1] = dot_scalar(a1, b, n);
  out[2] = dot_scalar(a2, b, n);
  out[3] = dot_scalar(a3, b, n);
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum_squares_scalar(const double* x, std::size_t n) {
  return dot_scalar(x, x, n);
}

void relu_scalar(const double* x, double* y, double* mask, double gain,
                 std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const bool on = x[i] > 0.0;
    mask[i] = on ? gain : 0.0;
    y[i] = on ? gain * x[i] : 0.0;
  }
}

void mul_scalar(const double* mask, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= mask[i];
}

void gemm_tile_scalar(const double* a, std::size_t ar, std::size_t ap, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc,
                      std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) {
      double s = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) s += a[r * ar + p * ap] * b[p * ldb + j];
      c[r * ldc + j] = s;
    }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{dot_scalar,   dot4_scalar,        axpy_scalar,
                             scale_scalar, sum_squares_scalar, relu_scalar,
                             mul_scalar,   gemm_tile_scalar};
  return t;
}

}  // namespace pmm::simd::detail
