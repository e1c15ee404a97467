#include "pmm/dln/deep_linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"

namespace pmm {

void validate_weights(const WeightTuple& w) {
  if (w.empty()) throw Error(ErrorKind::invalid_input, "network has no layers");
  for (std::size_t l = 0; l < w.size(); ++l) {
    if (w[l].empty())
      throw Error(ErrorKind::invalid_input, "layer " + std::to_string(l + 1) + " is empty");
    if (l > 0 && w[l].cols() != w[l - 1].rows())
      throw Error(ErrorKind::dimension_mismatch,
                  "layer " + std::to_string(l + 1) + " does not chain");
    if (!w[l].all_finite())
      throw Error(ErrorKind::invalid_input,
                  "layer " + std::to_string(l + 1) + " has non-finite weights");
  }
}

std::vector<std::size_t> widths_of(const WeightTuple& w) {
  std::vector<std::size_t> d;
  if (w.empty()) return d;
  d.push_back(w.front().cols());
  for (const auto& m : w) d.push_back(m.rows());
  return d;
}

double rms_singular_value(const Matrix& w) {
  return frobenius_norm(w) /
         std::sqrt(static_cast<double>(std::min(w.rows(), w.cols())));
}

double label_scale(const Matrix& y) {
  if (y.rows() == 0) throw Error(ErrorKind::invalid_input, "no labels");
  return frobenius_norm(y) / std::sqrt(static_cast<double>(y.rows()));
}

Matrix project_to_sphere(Matrix x) {
  const double r = std::sqrt(static_cast<double>(x.cols()));
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    const double n = norm2(row);
    if (n == 0.0)
      throw Error(ErrorKind::invalid_input,
                  "cannot project zero input " + std::to_string(i));
    for (double& v : row) v *= r / n;
  }
  return x;
}

void require_on_sphere(const Matrix& x, double tol) {
  const double r = std::sqrt(static_cast<double>(x.cols()));
  for (std::size_t i = 0; i < x.rows(); ++i)
    if (std::abs(norm2(x.row(i)) - r) > tol * r)
      throw Error(ErrorKind::invalid_input,
                  "input " + std::to_string(i) + " is off the radius-√d0 sphere");
}

}  // namespace pmm

namespace pmm::dln {
namespace {

constexpr double kNormTol = 1e-10;
constexpr int kNormIters = 1000;

double op_norm(const Matrix& m) { return spectral_norm(m, kNormTol, kNormIters); }

void require_matching(const WeightTuple& w, const WeightTuple& g) {
  if (w.size() != g.size())
    throw Error(ErrorKind::dimension_mismatch, "weight/gradient depth differs");
  for (std::size_t l = 0; l < w.size(); ++l)
    if (w[l].rows() != g[l].rows() || w[l].cols() != g[l].cols())
      throw Error(ErrorKind::dimension_mismatch,
                  "weight/gradient shape differs at layer " + std::to_string(l + 1));
}

// shared closed form: ½ log(1 + num / (F (F + y_scale)))
double log_rate(double numerator, double f, double y_scale) {
  return 0.5 * std::log1p(numerator / (f * (f + y_scale)));
}

}  // namespace

DeepLinearNet::DeepLinearNet(WeightTuple weights) : w_(std::move(weights)) {
  validate_weights(w_);
}

Vector dln_forward(const DeepLinearNet& net, std::span<const double> x) {
  const auto& w = net.weights();
  if (x.size() != w.front().cols())
    throw Error(ErrorKind::dimension_mismatch, "input length differs from d_0");
  Vector h(x.begin(), x.end());
  for (const auto& m : w) h = matvec(m, h);
  return h;
}

Matrix dln_forward_batch(const WeightTuple& w, const Matrix& x) {
  if (x.cols() != w.front().cols())
    throw Error(ErrorKind::dimension_mismatch, "input width differs from d_0");
  Matrix h = x;
  for (const auto& m : w) h = matmul_nt(h, m);
  return h;
}

double output_scale(const DeepLinearNet& net) {
  double f = std::sqrt(static_cast<double>(net.weights().front().cols()));
  for (const auto& m : net.weights()) f *= op_norm(m);
  return f;
}

double output_scale_rms(const WeightTuple& w) {
  double f = std::sqrt(static_cast<double>(w.front().cols()));
  for (const auto& m : w) f *= rms_singular_value(m);
  return f;
}

double dln_square_loss(const WeightTuple& w, const Matrix& x, const Matrix& y) {
  Matrix r = dln_forward_batch(w, x);
  r -= y;
  const double n = frobenius_norm(r);
  return 0.5 * n * n / static_cast<double>(x.rows());
}

WeightTuple dln_square_loss_gradient(const WeightTuple& w, const Matrix& x,
                                     const Matrix& y) {
  const std::size_t depth = w.size();
  std::vector<Matrix> h{x};
  for (const auto& m : w) h.push_back(matmul_nt(h.back(), m));
  Matrix g = h.back();
  g -= y;
  g *= 1.0 / static_cast<double>(x.rows());
  WeightTuple grads(depth);
  for (std::size_t l = depth; l-- > 0;) {
    grads[l] = matmul_tn(g, h[l]);
    if (l > 0) g = matmul(g, w[l]);
  }
  return grads;
}

PerturbationBoundReport perturbation_bounds(const DeepLinearNet& net,
                                            const WeightTuple& delta,
                                            const Matrix& x) {
  const auto& w = net.weights();
  require_matching(w, delta);
  require_on_sphere(x);
  PerturbationBoundReport rep;
  rep.output_scale = std::sqrt(static_cast<double>(x.cols()));
  // e[k] is the k-th elementary symmetric polynomial of the relative sizes,
  // so Π(1 + r) − 1 and Π(1 + r) − 1 − Σr are sums of e[k] without cancellation.
  std::vector<double> e(w.size() + 1, 0.0);
  e[0] = 1.0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    const double nw = op_norm(w[l]);
    if (nw == 0.0)
      throw Error(ErrorKind::degenerate_layer,
                  "layer " + std::to_string(l + 1) + " has zero operator norm");
    const double r = op_norm(delta[l]) / nw;
    rep.output_scale *= nw;
    rep.relative_sizes.push_back(r);
    for (std::size_t k = l + 1; k > 0; --k) e[k] += r * e[k - 1];
  }
  double higher = 0.0;
  for (std::size_t k = e.size() - 1; k >= 2; --k) higher += e[k];
  const double sm = std::sqrt(static_cast<double>(x.rows()));
  rep.first_order = sm * rep.output_scale * (e[1] + higher);
  rep.second_order = sm * rep.output_scale * higher;

  // forward pass carrying the tangent ∇_w f_X Δw alongside the activations
  Matrix h = x, hp = x, t(x.rows(), x.cols());
  for (std::size_t l = 0; l < w.size(); ++l) {
    Matrix wp = w[l] + delta[l];
    t = matmul_nt(t, w[l]) + matmul_nt(h, delta[l]);
    h = matmul_nt(h, w[l]);
    hp = matmul_nt(hp, wp);
  }
  Matrix df = hp - h;
  rep.measured_change = frobenius_norm(df);
  rep.measured_linearisation_error = frobenius_norm(df - t);
  return rep;
}

std::pair<double, double> ansatz_bounds(double f, double eta, std::size_t m) {
  if (eta < 0.0) throw Error(ErrorKind::invalid_input, "eta must be >= 0");
  const double s = std::sqrt(static_cast<double>(m)) * f;
  return {s * std::expm1(eta), s * (std::expm1(eta) - eta)};
}

double square_loss_majorisation_rhs(double f, double y_norm, std::size_t m,
                                    double eta) {
  if (eta < 0.0) throw Error(ErrorKind::invalid_input, "eta must be >= 0");
  const double y_scale = y_norm / std::sqrt(static_cast<double>(m));
  return 0.5 * f * (f + y_scale) * (std::expm1(2.0 * eta) - 2.0 * eta);
}

std::optional<double> eta_star(const WeightTuple& w, const WeightTuple& grads,
                               double y_scale) {
  require_matching(w, grads);
  double num = 0.0;
  double f = std::sqrt(static_cast<double>(w.front().cols()));
  for (std::size_t l = 0; l < w.size(); ++l) {
    const double gop = op_norm(grads[l]);
    if (gop == 0.0) return std::nullopt;
    const double nw = op_norm(w[l]);
    const double gf = frobenius_norm(grads[l]);
    num += nw * gf * gf / gop;
    f *= nw;
  }
  if (f == 0.0) throw Error(ErrorKind::degenerate_layer, "output scale is zero");
  return log_rate(num / static_cast<double>(w.size()), f, y_scale);
}

std::optional<double> eta_dagger(const WeightTuple& w, const WeightTuple& grads,
                                 double y_scale) {
  require_matching(w, grads);
  double num = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    const double gf = frobenius_norm(grads[l]);
    if (gf == 0.0) return std::nullopt;
    num += rms_singular_value(w[l]) * gf;
  }
  const double f = output_scale_rms(w);
  if (f == 0.0) throw Error(ErrorKind::degenerate_layer, "output scale is zero");
  return log_rate(num / static_cast<double>(w.size()), f, y_scale);
}

UpdateResult architecture_aware_update(const WeightTuple& w,
                                       const WeightTuple& grads, double y_scale,
                                       const UpdateOptions& opt) {
  require_matching(w, grads);
  const bool op = opt.flavour == Flavour::operator_norm;
  for (const auto& g : grads)
    if (frobenius_norm(g) == 0.0) return {w, 0.0, true};

  double eta;
  if (opt.fixed_eta) {
    eta = *opt.fixed_eta;
  } else {
    const auto e = op ? eta_star(w, grads, y_scale) : eta_dagger(w, grads, y_scale);
    if (!e) return {w, 0.0, true};
    eta = *e;
  }

  const double per_layer =
      opt.depth_scaling ? eta / static_cast<double>(w.size()) : eta;
  UpdateResult out{w, eta, false};
  for (std::size_t l = 0; l < w.size(); ++l) {
    const double s = op ? op_norm(w[l]) : rms_singular_value(w[l]);
    const double n = op ? op_norm(grads[l]) : frobenius_norm(grads[l]);
    if (!std::isfinite(s) || !std::isfinite(n))
      throw Error(ErrorKind::diverged, "layer or gradient norm overflowed");
    Matrix step = grads[l];
    step *= -per_layer * s / n;
    out.weights[l] += step;
  }
  return out;
}

Trajectory train_dln(WeightTuple w, const Matrix& x, const Matrix& y,
                     std::size_t steps, const UpdateOptions& opt) {
  validate_weights(w);
  require_on_sphere(x);
  const double ys = label_scale(y);
  Trajectory tr;
  double loss = dln_square_loss(w, x, y);
  tr.points.push_back({0, loss, 0.0});
  for (std::size_t s = 1; s <= steps; ++s) {
    const auto grads = dln_square_loss_gradient(w, x, y);
    UpdateResult up;
    try {
      up = architecture_aware_update(w, grads, ys, opt);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::diverged) throw;
      tr.points.push_back({s, std::numeric_limits<double>::infinity(), 0.0});
      tr.diverged = true;
      break;
    }
    w = std::move(up.weights);
    loss = dln_square_loss(w, x, y);
    tr.points.push_back({s, loss, up.eta});
    if (!std::isfinite(loss)) {
      tr.diverged = true;
      break;
    }
  }
  tr.final_weights = std::move(w);
  return tr;
}

}  // namespace pmm::dln
