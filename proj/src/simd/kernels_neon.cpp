#include <arm_neon.h>

#include "pmm/simd/kernels.hpp"

namespace pmm::simd::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void dot4_neon(const double* a0, const double* a1, const double* a2,
               const double* a3, const double* b, std::size_t n, double* out) {
  float64x2_t c0 = vdupq_n_f64(0.0), c1 = vdupq_n_f64(0.0);
  float64x2_t c2 = vdupq_n_f64(0.0), c3 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t bv = vld1q_f64(b + i);
    c0 = vfmaq_f64(c0, vld1q_f64(a0 + i), bv);
    c1 = vfmaq_f64(c1, vld1q_f64(a1 + i), bv);
    c2 = vfmaq_f64(c2, vld1q_f64(a2 + i), bv);
    c3 = vfmaq_f64(c3, vld1q_f64(a3 + i), bv);
  }
  double s0 = vaddvq_f64(c0), s1 = vaddvq_f64(c1);
  double s2 = vaddvq_f64(c2), s3 = vaddvq_f64(c3);
  for (; i < n; ++i) {
    s0 += a0[i] * b[i];
    s1 += a1[i] * b[i];
    s2 += a2[i] * b[i];
    s3 += a3[i] * b[i];
  }
  out[0] = s0;
  out[1] = s1;
  out[2] = s2;
  out[3] = s3;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), av, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(double alpha, double* x, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_n_f64(vld1q_f64(x + i), alpha));
  for (; i < n; ++i) x[i] *= alpha;
}

double sum_squares_neon(const double* x, std::size_t n) {
  return dot_neon(x, x, n);
}

void relu_neon(const double* x, double* y, double* mask, double gain,
               std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t g = vdupq_n_f64(gain);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    const uint64x2_t on = vcgtq_f64(v, zero);
    const float64x2_t m = vreinterpretq_f64_u64(
        vandq_u64(on, vreinterpretq_u64_f64(g)));
    vst1q_f64(mask + i, m);
    vst1q_f64(y + i, vmulq_f64(m, v));
  }
  for (; i < n; ++i) {
    const bool on = x[i] > 0.0;
    mask[i] = on ? gain : 0.0;
    y[i] = on ? gain * x[i] : 0.0;
  }
}

void mul_neon(const double* mask, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vmulq_f64(vld1q_f64(mask + i), vld1q_f64(y + i)));
  for (; i < n; ++i) y[i] *= mask[i];
}

template <int Rows>
void tile8_neon(const double* a, std::size_t ar, std::size_t ap, const double* b, std::size_t ldb,
                double* c, std::size_t ldc, std::size_t k) {
  float64x2_t acc[Rows][4];
  for (int r = 0; r < Rows; ++r)
    for (int q = 0; q < 4; ++q) acc[r][q] = vld1q_f64(c + r * ldc + 2 * q);
  for (std::size_t p = 0; p < k; ++p) {
    float64x2_t bv[4];
    for (int q = 0; q < 4; ++q) bv[q] = vld1q_f64(b + p * ldb + 2 * q);
    for (int r = 0; r < Rows; ++r) {
      const float64x2_t ar = vdupq_n_f64(a[r * ar + p * ap]);
      for (int q = 0; q < 4; ++q) acc[r][q] = vfmaq_f64(acc[r][q], ar, bv[q]);
    }
  }
  for (int r = 0; r < Rows; ++r)
    for (int q = 0; q < 4; ++q) vst1q_f64(c + r * ldc + 2 * q, acc[r][q]);
}

void gemm_tile_neon(const double* a, std::size_t ar, std::size_t ap, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc,
                    std::size_t rows, std::size_t cols, std::size_t k) {
  if (cols == 8) {
    switch (rows) {
      case 4: return tile8_neon<4>(a, ar, ap, b, ldb, c, ldc, k);
      case 3: return tile8_neon<3>(a, ar, ap, b, ldb, c, ldc, k);
      case 2: return tile8_neon<2>(a, ar, ap, b, ldb, c, ldc, k);
      case 1: return tile8_neon<1>(a, ar, ap, b, ldb, c, ldc, k);
      default: break;
    }
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) {
      double s = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) s += a[r * ar + p * ap] * b[p * ldb + j];
      c[r * ldc + j] = s;
    }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable t{dot_neon,   dot4_neon,        axpy_neon,
                             scale_neon, sum_squares_neon, relu_neon,
                             mul_neon,   gemm_tile_neon};
  return t;
}

}  // namespace pmm::simd::detail
