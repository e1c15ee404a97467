#include "pmm/numerics/linalg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "pmm/numerics/error.hpp"
#include "pmm/numerics/rng.hpp"
#include "pmm/simd/kernels.hpp"

namespace pmm {
namespace {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

double spectral_by_eigensolver(const Matrix& m) {
  const auto a = view(m);
  Eigen::MatrixXd g = m.rows() >= m.cols() ? Eigen::MatrixXd(a.transpose() * a)
                                           : Eigen::MatrixXd(a * a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace

double frobenius_norm(const Matrix& m) {
  return std::sqrt(simd::sum_squares(m.data(), m.size()));
}

double spectral_norm(const Matrix& m, double tol, int max_iter) {
  if (m.empty()) throw Error(ErrorKind::invalid_input, "spectral_norm: empty");
  if (!(tol > 0.0))
    throw Error(ErrorKind::invalid_input, "spectral_norm: tol must be > 0");
  if (!m.all_finite())
    throw Error(ErrorKind::invalid_input, "spectral_norm: non-finite entry");
  if (m.rows() == 1 || m.cols() == 1) return frobenius_norm(m);

  // Iterate on the Gram side with the smaller dimension.
  const bool tall = m.rows() >= m.cols();
  const std::size_t n = tall ? m.cols() : m.rows();
  RngStream rng(0x5eed0000ULL ^ m.rows(), m.cols());
  Vector v = gaussian_draws(rng, n);
  double nv = norm2(v);
  for (double& x : v) x /= nv;

  auto gram_apply = [&](const Vector& x) {
    return tall ? matvec_t(m, matvec(m, x)) : matvec(m, matvec_t(m, x));
  };

  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = gram_apply(v);
    const double next = dot(v, w);  // Rayleigh quotient, ‖v‖ = 1
    const double nw = norm2(w);
    if (nw == 0.0) return 0.0;
    // Residual ‖Gv − λv‖ bounds the distance from λ to the spectrum.
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = w[i] - next * v[i];
      r2 += r * r;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
    if (std::abs(next - lambda) <= tol * next && std::sqrt(r2) <= tol * next)
      return std::sqrt(next);
    lambda = next;
  }
  return spectral_by_eigensolver(m);
}

bool cholesky_in_place(Matrix& a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double* rj = a.data() + j * n;
    const double d = rj[j] - simd::dot(rj, rj, j);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    rj[j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double* ri = a.data() + i * n;
      ri[j] = (ri[j] - simd::dot(ri, rj, j)) / ljj;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
  return true;
}

CholeskyResult chol_logdet(const Matrix& psd, double jitter) {
  if (!psd.is_square() || psd.empty())
    throw Error(ErrorKind::dimension_mismatch, "chol_logdet: not square");
  if (!psd.all_finite())
    throw Error(ErrorKind::invalid_input, "chol_logdet: non-finite entry");
  if (jitter < 0.0)
    throw Error(ErrorKind::invalid_input, "chol_logdet: negative jitter");
  const std::size_t m = psd.rows();
  double scale = 0.0, asym = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      scale = std::max(scale, std::abs(psd(i, j)));
      asym = std::max(asym, std::abs(psd(i, j) - psd(j, i)));
    }
  if (asym > 1e-10 * scale)
    throw Error(ErrorKind::invalid_input, "chol_logdet: matrix not symmetric");

  const double mean_diag = trace(psd) / static_cast<double>(m);
  const double ceiling = 1e-4 * mean_diag;

  auto attempt = [&](double j, CholeskyResult& out) {
    Matrix a = psd;
    for (std::size_t i = 0; i < m; ++i) a(i, i) += j;
    if (!cholesky_in_place(a)) return false;
    double ld = 0.0;
    for (std::size_t i = 0; i < m; ++i) ld += 2.0 * std::log(a(i, i));
    out = CholeskyResult{std::move(a), ld, j};
    return true;
  };

  CholeskyResult out;
  if (attempt(jitter, out)) return out;
  double j = jitter > 0.0 ? 10.0 * jitter : 1e-12 * mean_diag;
  while (j > 0.0 && j <= ceiling) {
    if (attempt(j, out)) return out;
    j *= 10.0;
  }
  throw Error(ErrorKind::singular_gram,
              "cholesky failed with jitter up to " + std::to_string(ceiling));
}

Vector solve_lower(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  if (b.size() != n) throw Error(ErrorKind::dimension_mismatch, "solve_lower");
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = (b[i] - simd::dot(l.data() + i * n, y.data(), i)) / l(i, i);
  return y;
}

Vector solve_upper_t(const Matrix& l, std::span<const double> y) {
  const std::size_t n = l.rows();
  if (y.size() != n)
    throw Error(ErrorKind::dimension_mismatch, "solve_upper_t");
  Vector x(y.begin(), y.end());
  for (std::size_t ii = n; ii-- > 0;) {
    x[ii] /= l(ii, ii);
    const double xi = x[ii];
    // column ii of L below the diagonal is row ii of Lᵀ
    for (std::size_t k = 0; k < ii; ++k) x[k] -= l(ii, k) * xi;
  }
  return x;
}

Vector chol_solve(const Matrix& l, std::span<const double> b) {
  return solve_upper_t(l, solve_lower(l, b));
}

Matrix chol_solve(const Matrix& l, const Matrix& b) {
  const std::size_t n = l.rows();
  if (b.rows() != n) throw Error(ErrorKind::dimension_mismatch, "chol_solve");
  const std::size_t k = b.cols();
  Matrix x = b;
  for (std::size_t i = 0; i < n; ++i) {
    double* xi = x.data() + i * k;
    for (std::size_t j = 0; j < i; ++j)
      if (l(i, j) != 0.0) simd::axpy(-l(i, j), x.data() + j * k, xi, k);
    simd::scale(1.0 / l(i, i), xi, k);
  }
  for (std::size_t i = n; i-- > 0;) {
    double* xi = x.data() + i * k;
    simd::scale(1.0 / l(i, i), xi, k);
    for (std::size_t j = 0; j < i; ++j)
      if (l(i, j) != 0.0) simd::axpy(-l(i, j), xi, x.data() + j * k, k);
  }
  return x;
}

Matrix chol_inverse(const Matrix& l) {
  Matrix inv = chol_solve(l, Matrix::identity(l.rows()));
  for (std::size_t i = 0; i < inv.rows(); ++i)
    for (std::size_t j = i + 1; j < inv.cols(); ++j) {
      const double s = 0.5 * (inv(i, j) + inv(j, i));
      inv(i, j) = s;
      inv(j, i) = s;
    }
  return inv;
}

SymmetricEigen symmetric_eigen(const Matrix& sym) {
  if (!sym.is_square())
    throw Error(ErrorKind::dimension_mismatch, "symmetric_eigen");
  const Eigen::MatrixXd a = view(sym);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw Error(ErrorKind::subproblem, "eigendecomposition did not converge");
  const std::size_t n = sym.rows();
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = es.eigenvalues()(i);
    for (std::size_t j = 0; j < n; ++j)
      out.vectors(i, j) = es.eigenvectors()(i, j);
  }
  return out;
}

}  // namespace pmm
