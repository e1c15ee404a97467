#pragma once

// Dense double-precision inner loops.
//
// Every kernel has a scalar reference implementation. Vector variants
// (AVX2+FMA on x86-64, NEON on aarch64) are selected once at startup from
// the CPU feature bits; PMM_SIMD=scalar in the environment forces the
// reference path, which is the one to use when bit-identical output across
// machines matters. Vector variants reassociate sums, so results differ from
// the reference in the last few ulps.

#include <cstddef>
#include <string_view>

namespace pmm::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// ISA currently used by the free functions below.
Isa active_isa();

/// True if `isa` was compiled in and the running CPU supports it.
bool isa_available(Isa isa);

/// Switches the dispatch table. Throws std::invalid_argument if `isa` is
/// unavailable. Not thread-safe; meant for tests and CLI start-up.
void set_isa(Isa isa);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*dot4)(const double* a0, const double* a1, const double* a2,
               const double* a3, const double* b, std::size_t n, double* out);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // y[i] = max(0, x[i]) * gain, mask[i] = x[i] > 0 ? gain : 0
  void (*relu)(const double* x, double* y, double* mask, double gain,
               std::size_t n);
  // y[i] *= mask[i]
  void (*mul)(const double* mask, double* y, std::size_t n);
  // c[r][j] += Σ_p a[r][p] b[p][j] for r < rows ≤ 4, j < cols ≤ 8, with
  // a[r][p] at a[r·ar + p·ap] and b, c row-major with leading dimensions ldb, ldc
  void (*gemm_tile)(const double* a, std::size_t ar, std::size_t ap, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc,
                    std::size_t rows, std::size_t cols, std::size_t k);
};

inline constexpr std::size_t kTileRows = 4;
inline constexpr std::size_t kTileCols = 8;

/// Table for a specific ISA (for equivalence testing).
const KernelTable& table(Isa isa);

// Dispatching entry points.
double dot(const double* a, const double* b, std::size_t n);
void dot4(const double* a0, const double* a1, const double* a2,
          const double* a3, const double* b, std::size_t n, double* out);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* x, std::size_t n);
double sum_squares(const double* x, std::size_t n);
void relu(const double* x, double* y, double* mask, double gain,
          std::size_t n);
void mul(const double* mask, double* y, std::size_t n);
void gemm_tile(const double* a, std::size_t ar, std::size_t ap, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, std::size_t rows,
               std::size_t cols, std::size_t k);

namespace detail {
const KernelTable& scalar_table();
#if defined(PMM_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(PMM_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace pmm::simd
