#include <cstdlib>
#include <stdexcept>
#include <string>

#include "pmm/simd/kernels.hpp"

namespace pmm::simd {
namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(PMM_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(PMM_HAVE_NEON)
      return true;  // mandatory on aarch64
#else
      return false;
#endif
  }
  return false;
}

Isa detect() {
  if (const char* env = std::getenv("PMM_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::scalar;
    if (v == "avx2" && cpu_supports(Isa::avx2)) return Isa::avx2;
    if (v == "neon" && cpu_supports(Isa::neon)) return Isa::neon;
  }
  if (cpu_supports(Isa::avx2)) return Isa::avx2;
  if (cpu_supports(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

struct State {
  Isa isa;
  const KernelTable* kt;
};

State& state() {
  static State s = [] {
    const Isa isa = detect();
    return State{isa, &table(isa)};
  }();
  return s;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) { return cpu_supports(isa); }

const KernelTable& table(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return detail::scalar_table();
    case Isa::avx2:
#if defined(PMM_HAVE_AVX2)
      return detail::avx2_table();
#else
      break;
#endif
    case Isa::neon:
#if defined(PMM_HAVE_NEON)
      return detail::neon_table();
#else
      break;
#endif
  }
  throw std::invalid_argument("simd: ISA not compiled in: " +
                              std::string(isa_name(isa)));
}

Isa active_isa() { return state().isa; }

void set_isa(Isa isa) {
  if (!cpu_supports(isa))
    throw std::invalid_argument("simd: ISA unavailable: " +
                                std::string(isa_name(isa)));
  state() = State{isa, &table(isa)};
}

double dot(const double* a, const double* b, std::size_t n) {
  return state().kt->dot(a, b, n);
}
void dot4(const double* a0, const double* a1, const double* a2,
          const double* a3, const double* b, std::size_t n, double* out) {
  state().kt->dot4(a0, a1, a2, a3, b, n, out);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  state().kt->axpy(alpha, x, y, n);
}
void scale(double alpha, double* x, std::size_t n) {
  state().kt->scale(alpha, x, n);
}
double sum_squares(const double* x, std::size_t n) {
  return state().kt->sum_squares(x, n);
}
void relu(const double* x, double* y, double* mask, double gain,
          std::size_t n) {
  state().kt->relu(x, y, mask, gain, n);
}
void mul(const double* mask, double* y, std::size_t n) {
  state().kt->mul(mask, y, n);
}
void gemm_tile(const double* a, std::size_t ar, std::size_t ap, const double* b,
               std::size_t ldb, double* c, std::size_t ldc, std::size_t rows,
               std::size_t cols, std::size_t k) {
  state().kt->gemm_tile(a, ar, ap, b, ldb, c, ldc, rows, cols, k);
}

}  // namespace pmm::simd
