// Compiled with -mavx2 -mfma. Only reachable through the dispatch table,
// which checks CPU support first; keep standard-library templates out of
// this translation unit so no AVX code leaks into shared inline symbols.
#include <immintrin.h>

#include "pmm/simd/kernels.hpp"

namespace pmm::simd::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void dot4_avx2(const double* a0, const double* a1, const double* a2,
               const double* a3, const double* b, std::size_t n, double* out) {
  __m256d c0 = _mm256_setzero_pd();
  __m256d c1 = _mm256_setzero_pd();
  __m256d c2 = _mm256_setzero_pd();
  __m256d c3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d bv = _mm256_loadu_pd(b + i);
    c0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + i), bv, c0);
    c1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + i), bv, c1);
    c2 = _mm256_fmadd_pd(_mm256_loadu_pd(a2 + i), bv, c2);
    c3 = _mm256_fmadd_pd(_mm256_loadu_pd(a3 + i), bv, c3);
  }
  double s0 = hsum(c0), s1 = hsum(c1), s2 = hsum(c2), s3 = hsum(c3);
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

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4),
                                     _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, double* x, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

double sum_squares_avx2(const double* x, std::size_t n) {
  return dot_avx2(x, x, n);
}

void relu_avx2(const double* x, double* y, double* mask, double gain,
               std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d g = _mm256_set1_pd(gain);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d on = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    const __m256d m = _mm256_and_pd(on, g);
    _mm256_storeu_pd(mask + i, m);
    _mm256_storeu_pd(y + i, _mm256_mul_pd(m, v));
  }
  for (; i < n; ++i) {
    const bool on = x[i] > 0.0;
    mask[i] = on ? gain : 0.0;
    y[i] = on ? gain * x[i] : 0.0;
  }
}

void mul_avx2(const double* mask, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(mask + i),
                                          _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] *= mask[i];
}

// Named accumulators: GCC spills arrays of __m256d to the stack every step.
void tile4x8_avx2(const double* a, std::size_t ar, std::size_t ap, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc, std::size_t k) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  const double *a0 = a, *a1 = a + ar, *a2 = a + 2 * ar, *a3 = a + 3 * ar;
  for (std::size_t p = 0; p < k; ++p, b += ldb) {
    const std::size_t o = p * ap;
    const __m256d b0 = _mm256_loadu_pd(b), b1 = _mm256_loadu_pd(b + 4);
    __m256d av = _mm256_broadcast_sd(a0 + o);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a1 + o);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a2 + o);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a3 + o);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

void tile1x8_avx2(const double* a, std::size_t ap, const double* b, std::size_t ldb,
                  double* c, std::size_t k) {
  __m256d c0 = _mm256_loadu_pd(c), c1 = _mm256_loadu_pd(c + 4);
  for (std::size_t p = 0; p < k; ++p, b += ldb) {
    const __m256d av = _mm256_broadcast_sd(a + p * ap);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

void gemm_tile_avx2(const double* a, std::size_t ar, std::size_t ap, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc,
                    std::size_t rows, std::size_t cols, std::size_t k) {
  if (cols == 8) {
    if (rows == 4) return tile4x8_avx2(a, ar, ap, b, ldb, c, ldc, k);
    for (std::size_t r = 0; r < rows; ++r) tile1x8_avx2(a + r * ar, ap, b, ldb, c + r * ldc, k);
    return;
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) {
      double s = c[r * ldc + j];
      for (std::size_t p = 0; p < k; ++p) s += a[r * ar + p * ap] * b[p * ldb + j];
      c[r * ldc + j] = s;
    }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{dot_avx2,   dot4_avx2,        axpy_avx2,
                             scale_avx2, sum_squares_avx2, relu_avx2,
                             mul_avx2,   gemm_tile_avx2};
  return t;
}

}  // namespace pmm::simd::detail
