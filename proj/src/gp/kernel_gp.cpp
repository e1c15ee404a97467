#include "pmm/gp/kernel_gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pmm/dln/deep_linear.hpp"
#include "pmm/numerics/error.hpp"
#include "pmm/numerics/parallel.hpp"

namespace pmm::gp {
namespace {

constexpr double kSphereTol = 1e-6;
constexpr double kCosineSlack = 1e-9;

double clamp_cosine(double t) {
  if (std::abs(t) > 1.0 + kCosineSlack)
    throw Error(ErrorKind::domain, "normalised inner product " + std::to_string(t) +
                                       " outside [-1, 1]");
  return std::clamp(t, -1.0, 1.0);
}

double arccos_from_cosine(double t, std::size_t depth) {
  t = clamp_cosine(t);
  for (std::size_t l = 1; l < depth; ++l) t = std::min(1.0, arccos_step(t));
  return t;
}

void check_sphere_point(std::span<const double> x) {
  const double r = std::sqrt(static_cast<double>(x.size()));
  if (std::abs(norm2(x) - r) > kSphereTol * r)
    throw Error(ErrorKind::invalid_input, "arccos kernel input off the radius-√d0 sphere");
}

Matrix to_row(std::span<const double> q) {
  return Matrix(1, q.size(), Vector(q.begin(), q.end()));
}

// R with a = R Rᵀ: Cholesky when it succeeds, otherwise a clamped eigen root.
Matrix psd_root(const Matrix& a) {
  Matrix l = a;
  if (cholesky_in_place(l)) return l;
  const auto eig = symmetric_eigen(a);
  const double top = std::max(1.0, std::abs(eig.values.back()));
  Matrix r(a.rows(), a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    const double lam = eig.values[j];
    if (lam < -1e-8 * top)
      throw Error(ErrorKind::psd_violation,
                  "covariance eigenvalue " + std::to_string(lam));
    const double s = std::sqrt(std::max(lam, 0.0));
    for (std::size_t i = 0; i < a.rows(); ++i) r(i, j) = eig.vectors(i, j) * s;
  }
  return r;
}

// Rows of Vt are L⁻¹ applied to rows of kqx, so Vt Vtᵀ = K_qX K⁻¹ K_Xq.
Matrix whitened_cross(const GramBundle& g, const Matrix& kqx) {
  Matrix vt(kqx.rows(), kqx.cols());
  for (std::size_t i = 0; i < kqx.rows(); ++i) {
    const Vector v = solve_lower(g.chol.factor, kqx.row(i));
    std::copy(v.begin(), v.end(), vt.row(i).begin());
  }
  return vt;
}

void symmetrise(Matrix& a) {
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
}

}  // namespace

double gaussian_kernel(std::span<const double> x, std::span<const double> xp,
                       double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::invalid_input, "sigma must be > 0");
  if (x.size() != xp.size())
    throw Error(ErrorKind::dimension_mismatch, "gaussian kernel inputs differ in length");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - xp[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

double arccos_step(double t) {
  t = clamp_cosine(t);
  return (std::sqrt(std::max(0.0, 1.0 - t * t)) + t * (std::numbers::pi - std::acos(t))) /
         std::numbers::pi;
}

double arccos_kernel(std::span<const double> x, std::span<const double> xp,
                     std::size_t depth) {
  if (depth < 1) throw Error(ErrorKind::invalid_input, "arccos kernel depth must be >= 1");
  if (x.size() != xp.size() || x.empty())
    throw Error(ErrorKind::dimension_mismatch, "arccos kernel inputs differ in length");
  check_sphere_point(x);
  check_sphere_point(xp);
  return arccos_from_cosine(dot(x, xp) / static_cast<double>(x.size()), depth);
}

Kernel Kernel::gaussian(double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::invalid_input, "sigma must be > 0");
  Kernel k;
  k.kind_ = Kind::gaussian;
  k.sigma_ = sigma;
  return k;
}

Kernel Kernel::arccos(std::size_t depth) {
  if (depth < 1) throw Error(ErrorKind::invalid_input, "arccos kernel depth must be >= 1");
  Kernel k;
  k.kind_ = Kind::arccos;
  k.depth_ = depth;
  return k;
}

Kernel Kernel::custom(Fn fn) {
  if (!fn) throw Error(ErrorKind::invalid_input, "empty custom kernel");
  Kernel k;
  k.kind_ = Kind::custom;
  k.fn_ = std::move(fn);
  return k;
}

double Kernel::operator()(std::span<const double> x, std::span<const double> xp) const {
  switch (kind_) {
    case Kind::gaussian: return gaussian_kernel(x, xp, sigma_);
    case Kind::arccos: return arccos_kernel(x, xp, depth_);
    case Kind::custom: return fn_(x, xp);
  }
  return 0.0;
}

Matrix Kernel::cross(const Matrix& a, const Matrix& b) const {
  if (a.cols() != b.cols())
    throw Error(ErrorKind::dimension_mismatch, "kernel inputs differ in dimension");
  if (kind_ == Kind::arccos) {
    require_on_sphere(a, kSphereTol);
    require_on_sphere(b, kSphereTol);
    Matrix t = matmul_nt(a, b);
    const double d0 = static_cast<double>(a.cols());
    for (double& v : t.values()) v = arccos_from_cosine(v / d0, depth_);
    return t;
  }
  Matrix k(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) k(i, j) = (*this)(a.row(i), b.row(j));
  return k;
}

Matrix Kernel::gram(const Matrix& x) const {
  Matrix k = cross(x, x);
  symmetrise(k);
  return k;
}

double default_jitter(const Matrix& k) {
  if (k.rows() == 0) return 0.0;
  return 1e-10 * trace(k) / static_cast<double>(k.rows());
}

Matrix GramBundle::cross(const Matrix& q) const {
  if (!kernel)
    throw Error(ErrorKind::invalid_input, "gram built from a bare matrix has no kernel");
  return kernel->cross(q, x);
}

Vector GramBundle::cross(std::span<const double> q) const {
  const Matrix c = cross(to_row(q));
  return Vector(c.values().begin(), c.values().end());
}

Vector GramBundle::solve(std::span<const double> b) const {
  if (b.size() != m())
    throw Error(ErrorKind::dimension_mismatch, "right-hand side length differs from m");
  return chol_solve(chol.factor, b);
}

GramBundle make_gram(const Kernel& kernel, const Matrix& x, std::optional<double> jitter) {
  if (x.rows() == 0) throw Error(ErrorKind::invalid_input, "empty input set");
  GramBundle g{x, kernel.gram(x), {}, kernel};
  g.chol = chol_logdet(g.k, jitter.value_or(default_jitter(g.k)));
  return g;
}

GramBundle gram_from_matrix(const Matrix& k, std::optional<double> jitter) {
  if (!k.is_square() || k.rows() == 0)
    throw Error(ErrorKind::dimension_mismatch, "gram matrix must be square and non-empty");
  GramBundle g{{}, k, {}, std::nullopt};
  g.chol = chol_logdet(k, jitter.value_or(default_jitter(k)));
  return g;
}

double Interpolant::operator()(std::span<const double> q) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += alpha[i] * kernel(q, x.row(i));
  return s;
}

Vector Interpolant::predict(const Matrix& q) const {
  return matvec(kernel.cross(q, x), alpha);
}

Interpolant min_norm_interpolate(const GramBundle& gram, std::span<const double> y) {
  if (!gram.kernel)
    throw Error(ErrorKind::invalid_input, "interpolation needs a kernel-built gram");
  return {gram.solve(y), *gram.kernel, gram.x};
}

double rkhs_norm(const GramBundle& gram, std::span<const double> alpha) {
  if (alpha.size() != gram.m())
    throw Error(ErrorKind::dimension_mismatch, "alpha length differs from m");
  const double q = dot(alpha, matvec(gram.k, alpha));
  if (q < -1e-10)
    throw Error(ErrorKind::psd_violation, "negative RKHS quadratic form " + std::to_string(q));
  return std::sqrt(std::max(q, 0.0));
}

GpConditional gp_condition(const GpPosterior& post, const Matrix& q) {
  const GramBundle& g = post.gram;
  if (post.targets.size() != g.m())
    throw Error(ErrorKind::dimension_mismatch, "targets length differs from m");
  if (!(post.gamma > 0.0) || !(post.tau > 0.0))
    throw Error(ErrorKind::invalid_input, "gamma and tau must be > 0");
  const Matrix kqx = g.cross(q);
  Vector alpha = g.solve(post.targets);
  for (double& a : alpha) a *= post.gamma;
  GpConditional out{matvec(kqx, alpha), g.kernel->gram(q)};
  const Matrix vt = whitened_cross(g, kqx);
  out.cov -= matmul_nt(vt, vt);
  symmetrise(out.cov);
  out.cov *= post.tau * post.tau;
  return out;
}

double posterior_variance_distance(const GramBundle& gram, std::span<const double> x) {
  const Vector kx = gram.cross(x);
  const Vector v = solve_lower(gram.chol.factor, kx);
  return std::max(0.0, (*gram.kernel)(x, x) - dot(v, v));
}

double interpolation_error_bound(const GramBundle& gram, double g_norm,
                                 double fstar_norm, std::span<const double> x) {
  if (!(fstar_norm >= 0.0) || !(g_norm >= fstar_norm))
    throw Error(ErrorKind::invalid_input, "need g_norm >= fstar_norm >= 0");
  return std::sqrt(g_norm * g_norm - fstar_norm * fstar_norm) *
         std::sqrt(posterior_variance_distance(gram, x));
}

GaussianSampler::GaussianSampler(const Matrix& cov) : root_(psd_root(cov)), z_(cov.rows()) {}

void GaussianSampler::draw(RngStream& rng, std::span<double> out) const {
  if (out.size() != dim())
    throw Error(ErrorKind::dimension_mismatch, "sample buffer length differs from dimension");
  rng.fill_normal(z_);
  const Vector f = matvec(root_, z_);
  std::copy(f.begin(), f.end(), out.begin());
}

Matrix concentration_sample(const GpPosterior& post, const Matrix& q, std::size_t n,
                            RngStream& rng) {
  const GpConditional c = gp_condition(post, q);
  const GaussianSampler s(c.cov);
  Matrix out(n, q.rows());
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.row(i);
    s.draw(rng, row);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] + c.mean[j]) / post.gamma;
  }
  return out;
}

namespace {

// Adds f fᵀ for `count` random nets to acc.
void nngp_chunk(const std::vector<std::size_t>& widths, std::size_t count, const Matrix& x,
                RngStream& rng, NngpMethod method, Matrix& acc) {
  const std::size_t m = x.rows();
  const std::size_t depth = widths.size() - 1;
  Vector f(m);
  for (std::size_t draw = 0; draw < count; ++draw) {
    Matrix phi = x;
    for (std::size_t l = 1; l <= depth; ++l) {
      const std::size_t din = widths[l - 1], dout = widths[l];
      Matrix h;
      if (method == NngpMethod::weights) {
        Matrix w(dout, din);
        rng.fill_normal(w.values());
        w *= 1.0 / std::sqrt(static_cast<double>(din));
        h = matmul_nt(phi, w);
      } else {
        Matrix cov = matmul_nt(phi, phi);
        cov *= 1.0 / static_cast<double>(din);
        const Matrix r = psd_root(cov);
        Matrix z(m, dout);
        rng.fill_normal(z.values());
        h = matmul(r, z);
      }
      if (l == depth) {
        for (std::size_t i = 0; i < m; ++i) f[i] = h(i, 0);
      } else {
        for (double& v : h.values()) v = v > 0.0 ? std::numbers::sqrt2 * v : 0.0;
        phi = std::move(h);
      }
    }
    for (std::size_t i = 0; i < m; ++i) axpy(f[i], f, acc.row(i));
  }
}

}  // namespace

Matrix nngp_empirical_kernel(const std::vector<std::size_t>& widths, std::size_t n,
                             const Matrix& x, RngStream& rng, const NngpOptions& opt) {
  if (widths.size() < 2)
    throw Error(ErrorKind::invalid_input, "need at least input and output widths");
  if (widths.back() != 1)
    throw Error(ErrorKind::invalid_input, "network output must be scalar");
  if (widths.front() != x.cols())
    throw Error(ErrorKind::dimension_mismatch, "input dimension differs from widths[0]");
  if (std::find(widths.begin(), widths.end(), 0u) != widths.end())
    throw Error(ErrorKind::invalid_input, "zero width");
  if (n == 0) throw Error(ErrorKind::invalid_input, "need at least one sample");
  require_on_sphere(x, kSphereTol);

  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  std::vector<Matrix> parts(chunks, Matrix(x.rows(), x.rows()));
  parallel_for(chunks, opt.workers, [&](std::size_t c) {
    RngStream sub = rng.split(c);
    const std::size_t count = std::min(chunk, n - c * chunk);
    nngp_chunk(widths, count, x, sub, opt.method, parts[c]);
  });
  Matrix k(x.rows(), x.rows());
  for (const auto& p : parts) k += p;
  k *= 1.0 / static_cast<double>(n);
  return k;
}

}  // namespace pmm::gp
