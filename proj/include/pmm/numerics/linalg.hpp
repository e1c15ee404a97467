#pragma once

#include <cstddef>
#include <span>

#include "pmm/numerics/matrix.hpp"

namespace pmm {

inline constexpr double kDefaultSpectralTol = 1e-6;
inline constexpr int kDefaultSpectralIters = 100;

/// Largest singular value.
///
/// Power iteration on the smaller Gram matrix (AᵀA or AAᵀ) from a start
/// vector seeded by the matrix shape. The estimate is accepted once the
/// Rayleigh quotient stabilises to `tol` and the eigen-residual certifies it;
/// otherwise a dense symmetric eigensolve on the Gram matrix decides.
double spectral_norm(const Matrix& m, double tol = kDefaultSpectralTol,
                     int max_iter = kDefaultSpectralIters);

double frobenius_norm(const Matrix& m);

struct CholeskyResult {
  Matrix factor;       // lower triangular L with L Lᵀ = psd + jitter I
  double logdet = 0;   // log |psd + jitter I|
  double jitter = 0;   // jitter actually applied
};

/// Cholesky factorisation with jitter escalation.
///
/// Starts at `jitter` (or 1e-12·trace/m if that is zero and the plain
/// factorisation fails) and multiplies by 10 until the factorisation
/// succeeds or the jitter would exceed 1e-4·trace/m, which raises
/// ErrorKind::singular_gram. Asymmetry above 1e-10 relative is rejected as
/// invalid input.
CholeskyResult chol_logdet(const Matrix& psd, double jitter = 0.0);

/// Plain Cholesky without escalation; returns false on failure.
bool cholesky_in_place(Matrix& a);

/// Solves L y = b (forward substitution).
Vector solve_lower(const Matrix& l, std::span<const double> b);
/// Solves Lᵀ x = y (back substitution).
Vector solve_upper_t(const Matrix& l, std::span<const double> y);
/// Solves (L Lᵀ) x = b.
Vector chol_solve(const Matrix& l, std::span<const double> b);
/// Solves (L Lᵀ) X = B column by column.
Matrix chol_solve(const Matrix& l, const Matrix& b);
/// (L Lᵀ)⁻¹
Matrix chol_inverse(const Matrix& l);

/// Symmetric eigendecomposition; eigenvalues ascending, eigenvectors as
/// columns of `vectors`.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;
};
SymmetricEigen symmetric_eigen(const Matrix& sym);

}  // namespace pmm
