#include "pmm/numerics/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pmm/numerics/error.hpp"
#include "pmm/simd/kernels.hpp"

namespace pmm {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorKind::dimension_mismatch,
                std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " +
                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows * cols)
    throw Error(ErrorKind::dimension_mismatch,
                "matrix: " + std::to_string(data_.size()) +
                    " entries for shape " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  if (!all_finite())
    throw Error(ErrorKind::invalid_input, "matrix: non-finite entry");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.front().size() : 0;
  std::vector<double> e;
  e.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c)
      throw Error(ErrorKind::dimension_mismatch, "matrix: ragged rows");
    e.insert(e.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(e));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "+=");
  simd::axpy(1.0, other.data(), data(), size());
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "-=");
  simd::axpy(-1.0, other.data(), data(), size());
  return *this;
}

Matrix& Matrix::operator*=(double c) {
  simd::scale(c, data(), size());
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double c, Matrix a) { return a *= c; }

namespace {

// c (m × n) += a (m × k) · b (k × n) with a, c row-major and b(p, j) at
// b[p * bp + j * bj].
void gemm(const double* a, const double* b, std::size_t bp, std::size_t bj,
          double* c, std::size_t m, std::size_t n, std::size_t k) {
  // B is repacked into contiguous 8-column panels; strided panel reads alias
  // in L1 and miss the TLB.
  constexpr std::size_t w = simd::kTileCols;
  std::vector<double> packed(k * n);
  auto slot = [&](std::size_t p, std::size_t j) {
    const std::size_t j0 = j - j % w;
    return j0 * k + p * std::min(w, n - j0) + (j - j0);
  };
  if (bj == 1) {
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) packed[slot(p, j)] = b[p * bp + j];
  } else {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) packed[slot(p, j)] = b[p * bp + j * bj];
  }
  // A is interleaved in blocks of kTileRows rows so each step of p reads one
  // contiguous group.
  constexpr std::size_t h = simd::kTileRows;
  std::vector<double> pa(m * k);
  for (std::size_t i = 0; i < m; i += h) {
    const std::size_t rows = std::min(h, m - i);
    double* dst = pa.data() + i * k;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t p = 0; p < k; ++p) dst[p * rows + r] = a[(i + r) * k + p];
  }
  // k is split into blocks whose slice of a B panel fits in L1
  constexpr std::size_t kc = 128;
  for (std::size_t j = 0; j < n; j += w) {
    const std::size_t cols = std::min(w, n - j);
    const double* panel = packed.data() + j * k;
    for (std::size_t p = 0; p < k; p += kc) {
      const std::size_t depth = std::min(kc, k - p);
      for (std::size_t i = 0; i < m; i += h) {
        const std::size_t rows = std::min(h, m - i);
        simd::gemm_tile(pa.data() + i * k + p * rows, 1, rows, panel + p * cols, cols,
                        c + i * n + j, n, rows, cols, depth);
      }
    }
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorKind::dimension_mismatch, "matmul: inner dimensions");
  Matrix c(a.rows(), b.cols());
  gemm(a.data(), b.data(), b.cols(), 1, c.data(), a.rows(), b.cols(), a.cols());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols())
    throw Error(ErrorKind::dimension_mismatch, "matmul_nt: inner dimensions");
  const std::size_t k = a.cols();
  Matrix c(a.rows(), b.rows());
  const std::size_t nb = b.rows();
  if (a.rows() >= simd::kTileRows) {
    gemm(a.data(), b.data(), 1, k, c.data(), a.rows(), nb, k);
    return c;
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * nb;
    std::size_t j = 0;
    for (; j + 4 <= nb; j += 4) {
      simd::dot4(b.data() + j * k, b.data() + (j + 1) * k,
                 b.data() + (j + 2) * k, b.data() + (j + 3) * k, ai, k,
                 ci + j);
    }
    for (; j < nb; ++j) ci[j] = simd::dot(b.data() + j * k, ai, k);
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw Error(ErrorKind::dimension_mismatch, "matmul_tn: inner dimensions");
  Matrix c(a.cols(), b.cols());
  const Matrix at = a.transpose();
  gemm(at.data(), b.data(), b.cols(), 1, c.data(), a.cols(), b.cols(), a.rows());
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size())
    throw Error(ErrorKind::dimension_mismatch, "matvec");
  Vector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    y[i] = simd::dot(a.data() + i * a.cols(), x.data(), x.size());
  return y;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size())
    throw Error(ErrorKind::dimension_mismatch, "matvec_t");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    if (x[i] != 0.0) simd::axpy(x[i], a.data() + i * a.cols(), y.data(), y.size());
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::dimension_mismatch, "dot");
  return simd::dot(a.data(), b.data(), a.size());
}

double norm2(std::span<const double> x) {
  return std::sqrt(simd::sum_squares(x.data(), x.size()));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::dimension_mismatch, "axpy");
  simd::axpy(alpha, x.data(), y.data(), x.size());
}

double trace(const Matrix& a) {
  if (!a.is_square()) throw Error(ErrorKind::dimension_mismatch, "trace");
  double t = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
  return t;
}

}  // namespace pmm
