#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pmm/numerics/linalg.hpp"
#include "pmm/numerics/matrix.hpp"
#include "pmm/numerics/rng.hpp"

namespace pmm::gp {

/// exp(−‖x − x′‖² / (2σ²))
double gaussian_kernel(std::span<const double> x, std::span<const double> xp,
                       double sigma);

/// h(t) = (1/π)[√(1 − t²) + t(π − arccos t)], the relu NNGP layer map.
double arccos_step(double t);

/// h composed depth − 1 times on t₀ = xᵀx′/d_0. Inputs must lie on the
/// radius-√d_0 sphere.
double arccos_kernel(std::span<const double> x, std::span<const double> xp,
                     std::size_t depth);

class Kernel {
 public:
  enum class Kind { gaussian, arccos, custom };
  using Fn = std::function<double(std::span<const double>, std::span<const double>)>;

  static Kernel gaussian(double sigma);
  static Kernel arccos(std::size_t depth);
  static Kernel custom(Fn fn);

  Kind kind() const noexcept { return kind_; }
  double sigma() const noexcept { return sigma_; }
  std::size_t depth() const noexcept { return depth_; }

  double operator()(std::span<const double> x, std::span<const double> xp) const;

  /// K with K_ij = k(a_i, b_j) over rows.
  Matrix cross(const Matrix& a, const Matrix& b) const;
  Matrix gram(const Matrix& x) const;

 private:
  Kind kind_ = Kind::gaussian;
  double sigma_ = 1.0;
  std::size_t depth_ = 1;
  Fn fn_;
};

/// Default jitter for Gram factorisations: 1e-10 · trace / m.
double default_jitter(const Matrix& k);

/// K_XX with its Cholesky factor. `kernel` is empty when the bundle was
/// built from a bare matrix; such bundles cannot evaluate new queries.
struct GramBundle {
  Matrix x;
  Matrix k;
  CholeskyResult chol;
  std::optional<Kernel> kernel;

  std::size_t m() const noexcept { return k.rows(); }
  double logdet() const noexcept { return chol.logdet; }
  /// K_qX for query rows q.
  Matrix cross(const Matrix& q) const;
  Vector cross(std::span<const double> q) const;
  /// (K_XX + jitter)⁻¹ b
  Vector solve(std::span<const double> b) const;
};

GramBundle make_gram(const Kernel& kernel, const Matrix& x,
                     std::optional<double> jitter = std::nullopt);
GramBundle gram_from_matrix(const Matrix& k, std::optional<double> jitter = std::nullopt);

struct Interpolant {
  Vector alpha;  // K_XX⁻¹ Y
  Kernel kernel;
  Matrix x;

  double operator()(std::span<const double> q) const;
  Vector predict(const Matrix& q) const;
};

Interpolant min_norm_interpolate(const GramBundle& gram, std::span<const double> y);

/// √(αᵀ K_XX α); a quadratic form below −1e-10 raises a PSD violation.
double rkhs_norm(const GramBundle& gram, std::span<const double> alpha);

/// GP conditioned on f_X = γ·targets under the prior covariance τ²·k.
struct GpPosterior {
  GramBundle gram;
  Vector targets;
  double gamma = 1.0;
  double tau = 1.0;
};

struct GpConditional {
  Vector mean;
  Matrix cov;
};

/// Posterior mean K_qX K⁻¹ (γY) and covariance τ²(K_qq − K_qX K⁻¹ K_Xq).
GpConditional gp_condition(const GpPosterior& post, const Matrix& q);

/// K_xx − K_xX K⁻¹ K_Xx, the squared RKHS distance from k(·, x) to the span
/// of the training basis functions. Clamped at zero.
double posterior_variance_distance(const GramBundle& gram, std::span<const double> x);

/// √(‖g‖² − ‖f⋆‖²) · √(posterior_variance_distance(x)).
double interpolation_error_bound(const GramBundle& gram, double g_norm,
                                 double fstar_norm, std::span<const double> x);

/// n draws (rows) of f_q/γ under the posterior; distribution
/// Normal(K_qX K⁻¹Y, (τ/γ)² · Schur complement).
Matrix concentration_sample(const GpPosterior& post, const Matrix& q, std::size_t n,
                            RngStream& rng);

/// Draws rows z ~ Normal(0, cov) through an eigen square root, so singular
/// covariances are accepted; eigenvalues below −1e-8·max are rejected.
class GaussianSampler {
 public:
  explicit GaussianSampler(const Matrix& cov);
  std::size_t dim() const noexcept { return root_.rows(); }
  void draw(RngStream& rng, std::span<double> out) const;

 private:
  Matrix root_;  // cov = root rootᵀ
  mutable Vector z_;
};

enum class NngpMethod {
  /// Per layer, the pre-activations of each unit are drawn jointly over the
  /// inputs from their exact conditional law Normal(0, ΦΦᵀ/d_{l−1}).
  preactivations,
  /// Every weight matrix is drawn explicitly and the net is evaluated.
  weights,
};

struct NngpOptions {
  NngpMethod method = NngpMethod::preactivations;
  std::size_t workers = 1;
  std::size_t chunk = 256;  // draws per RNG sub-stream
};

/// Empirical second moment (1/n) Σ f(x_i) f(x_j) over n random scaled-relu
/// nets with widths d_0..d_L (d_L = 1) and weights iid Normal(0, 1/d_{l−1}).
/// The result depends on (rng, n, chunk) only, not on the worker count.
Matrix nngp_empirical_kernel(const std::vector<std::size_t>& widths, std::size_t n,
                             const Matrix& x, RngStream& rng,
                             const NngpOptions& opt = {});

}  // namespace pmm::gp
