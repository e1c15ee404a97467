#include "pmm/mlp/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"
#include "pmm/simd/kernels.hpp"

namespace pmm::mlp {
namespace {

double gain(Nonlinearity phi) {
  return phi == Nonlinearity::scaled_relu ? std::sqrt(2.0) : 1.0;
}

struct Forward {
  std::vector<Matrix> inputs;  // H_0..H_{L−1}
  std::vector<Matrix> masks;   // φ'(Z_l) for hidden layers
  Matrix out;
};

Forward forward_cached(const MlpNet& net, const Matrix& x, bool keep) {
  const auto& w = net.weights();
  if (x.cols() != w.front().cols())
    throw Error(ErrorKind::dimension_mismatch, "input width differs from d_0");
  Forward fw;
  Matrix h = x;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    Matrix z = matmul_nt(h, w[l]);
    if (keep) fw.inputs.push_back(std::move(h));
    if (net.nonlinearity() == Nonlinearity::identity) {
      h = std::move(z);
      if (keep) fw.masks.emplace_back();
    } else {
      Matrix mask(z.rows(), z.cols());
      h = Matrix(z.rows(), z.cols());
      simd::relu(z.data(), h.data(), mask.data(), gain(net.nonlinearity()), z.size());
      if (keep) fw.masks.push_back(std::move(mask));
    }
  }
  fw.out = matmul_nt(h, w.back());
  if (keep) fw.inputs.push_back(std::move(h));
  return fw;
}

double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

void require_binary(const MlpNet& net, const TrainSample& s, const char* what) {
  if (net.weights().back().rows() != 1 || s.y.cols() != 1)
    throw Error(ErrorKind::invalid_input,
                std::string(what) + " needs a single output and ±1 labels");
}

void require_targets(const MlpNet& net, const TrainSample& s) {
  if (s.y.rows() != s.x.rows() || s.y.cols() != net.weights().back().rows())
    throw Error(ErrorKind::dimension_mismatch, "targets do not match outputs");
}

double penalty(const WeightTuple& w, double l2) {
  if (l2 == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& m : w) s += simd::sum_squares(m.data(), m.size());
  return l2 * s;
}

TrainSample subsample(const TrainSample& s, std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i)
    std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  TrainSample b{Matrix(n, s.x.cols()), Matrix(n, s.y.cols())};
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(s.x.row(idx[i]).begin(), s.x.cols(), b.x.row(i).begin());
    std::copy_n(s.y.row(idx[i]).begin(), s.y.cols(), b.y.row(i).begin());
  }
  return b;
}

}  // namespace

std::string_view to_string(Nonlinearity phi) {
  switch (phi) {
    case Nonlinearity::scaled_relu: return "scaled-relu";
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::identity: return "identity";
  }
  return "unknown";
}

Nonlinearity parse_nonlinearity(std::string_view name) {
  if (name == "scaled-relu") return Nonlinearity::scaled_relu;
  if (name == "relu") return Nonlinearity::relu;
  if (name == "identity") return Nonlinearity::identity;
  throw Error(ErrorKind::invalid_input, "unknown nonlinearity: " + std::string(name));
}

MlpNet::MlpNet(WeightTuple weights, Nonlinearity phi)
    : w_(std::move(weights)), phi_(phi) {
  validate_weights(w_);
}

void MlpNet::set_weights(WeightTuple w) {
  if (w.size() != w_.size())
    throw Error(ErrorKind::dimension_mismatch, "set_weights: depth differs");
  for (std::size_t l = 0; l < w.size(); ++l)
    if (w[l].rows() != w_[l].rows() || w[l].cols() != w_[l].cols())
      throw Error(ErrorKind::dimension_mismatch, "set_weights: shape differs");
  w_ = std::move(w);
}

Vector mlp_forward(const MlpNet& net, std::span<const double> x) {
  Matrix row(1, x.size());
  std::copy(x.begin(), x.end(), row.data());
  const Matrix out = mlp_forward_batch(net, row);
  return Vector(out.values().begin(), out.values().end());
}

Matrix mlp_forward_batch(const MlpNet& net, const Matrix& x) {
  return forward_cached(net, x, false).out;
}

double loss_eval(const MlpNet& net, const TrainSample& s, LossKind kind) {
  require_targets(net, s);
  const Matrix f = mlp_forward_batch(net, s.x);
  const std::size_t m = s.size(), k = f.cols();
  double total = 0.0;
  switch (kind) {
    case LossKind::square: {
      const Matrix r = f - s.y;
      const double n = frobenius_norm(r);
      return 0.5 * n * n / static_cast<double>(m);
    }
    case LossKind::logistic:
      require_binary(net, s, "logistic loss");
      for (std::size_t i = 0; i < m; ++i) total += softplus(-s.y(i, 0) * f(i, 0));
      return total / static_cast<double>(m);
    case LossKind::zero_one:
      for (std::size_t i = 0; i < m; ++i) {
        if (k == 1) {
          const double pred = f(i, 0) >= 0.0 ? 1.0 : -1.0;
          total += pred != s.y(i, 0);
        } else {
          const auto fr = f.row(i), yr = s.y.row(i);
          total += std::max_element(fr.begin(), fr.end()) - fr.begin() !=
                   std::max_element(yr.begin(), yr.end()) - yr.begin();
        }
      }
      return total / static_cast<double>(m);
  }
  return total;
}

double objective(const MlpNet& net, const TrainSample& s, const LossSpec& spec) {
  return loss_eval(net, s, spec.kind) + penalty(net.weights(), spec.l2);
}

LossAndGradient mlp_gradient(const MlpNet& net, const TrainSample& s,
                             const LossSpec& spec) {
  require_targets(net, s);
  if (spec.kind == LossKind::zero_one)
    throw Error(ErrorKind::invalid_input, "zero-one loss has no gradient");
  const auto& w = net.weights();
  Forward fw = forward_cached(net, s.x, true);
  const std::size_t m = s.size();
  const double inv_m = 1.0 / static_cast<double>(m);

  Matrix g(fw.out.rows(), fw.out.cols());
  double loss = 0.0;
  if (spec.kind == LossKind::square) {
    g = fw.out - s.y;
    const double n = frobenius_norm(g);
    loss = 0.5 * n * n * inv_m;
    g *= inv_m;
  } else {
    require_binary(net, s, "logistic loss");
    for (std::size_t i = 0; i < m; ++i) {
      const double t = s.y(i, 0) * fw.out(i, 0);
      loss += softplus(-t);
      // d/df log(1 + e^{−yf}) = −y σ(−yf)
      g(i, 0) = -s.y(i, 0) / (1.0 + std::exp(t)) * inv_m;
    }
    loss *= inv_m;
  }
  loss += penalty(w, spec.l2);

  LossAndGradient out{loss, WeightTuple(w.size())};
  for (std::size_t l = w.size(); l-- > 0;) {
    out.grads[l] = matmul_tn(g, fw.inputs[l]);
    if (spec.l2 != 0.0) simd::axpy(2.0 * spec.l2, w[l].data(), out.grads[l].data(), w[l].size());
    if (l > 0) {
      g = matmul(g, w[l]);
      const Matrix& mask = fw.masks[l - 1];
      if (!mask.empty()) simd::mul(mask.data(), g.data(), g.size());
    }
  }
  return out;
}

MarginReport margins(const MlpNet& net, const TrainSample& s) {
  require_targets(net, s);
  require_binary(net, s, "margins");
  require_on_sphere(s.x);
  MarginReport rep;
  double prod_star = 1.0, prod_f = 1.0;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const Matrix& w = net.weights()[l];
    const double op = spectral_norm(w);
    const double rms = rms_singular_value(w);
    if (op == 0.0 || rms == 0.0)
      throw Error(ErrorKind::degenerate_layer,
                  "layer " + std::to_string(l + 1) + " has zero norm");
    rep.spectral_norms.push_back(op);
    rep.rms_norms.push_back(rms);
    prod_star *= op;
    prod_f *= rms;
  }
  const Matrix f = mlp_forward_batch(net, s.x);
  double raw = std::numeric_limits<double>::infinity();
  double scaled = raw;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double mi = s.y(i, 0) * f(i, 0);
    raw = std::min(raw, mi);
    scaled = std::min(scaled, mi / norm2(s.x.row(i)));
  }
  rep.raw_min_margin = raw;
  rep.rho_star = scaled / prod_star;
  rep.rho_frobenius = scaled / prod_f;
  return rep;
}

MlpNet init_rms_one(const std::vector<std::size_t>& widths, RngStream& rng,
                    Nonlinearity phi) {
  if (widths.size() < 2)
    throw Error(ErrorKind::invalid_input, "need at least input and output widths");
  WeightTuple w;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    if (widths[l] == 0 || widths[l - 1] == 0)
      throw Error(ErrorKind::invalid_input, "zero width");
    const double sd = 1.0 / std::sqrt(static_cast<double>(std::max(widths[l], widths[l - 1])));
    Matrix m(widths[l], widths[l - 1]);
    for (double& v : m.values()) v = sd * rng.normal();
    w.push_back(std::move(m));
  }
  return MlpNet(std::move(w), phi);
}

Trajectory train_architecture_aware(MlpNet& net, const TrainSample& data,
                                    const TrainOptions& opt, RngStream* rng) {
  require_targets(net, data);
  const bool batched = opt.batch_size > 0 && opt.batch_size < data.size();
  if (opt.batch_size > data.size())
    throw Error(ErrorKind::invalid_input, "batch size exceeds sample count");
  if (batched && rng == nullptr)
    throw Error(ErrorKind::invalid_input, "minibatch training needs an rng");
  const double ys = label_scale(data.y);
  Trajectory tr;
  double eta_prev = 0.0;
  for (std::size_t s = 1; s <= opt.steps; ++s) {
    const auto lg = batched ? mlp_gradient(net, subsample(data, opt.batch_size, *rng))
                            : mlp_gradient(net, data);
    tr.points.push_back({s - 1, lg.loss, eta_prev});
    if (!std::isfinite(lg.loss)) {
      tr.diverged = true;
      return tr;
    }
    dln::UpdateResult up;
    try {
      up = dln::architecture_aware_update(net.weights(), lg.grads, ys, opt.update);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::diverged) throw;
      tr.points.push_back({s, std::numeric_limits<double>::infinity(), eta_prev});
      tr.diverged = true;
      return tr;
    }
    if (!std::all_of(up.weights.begin(), up.weights.end(),
                     [](const Matrix& m) { return m.all_finite(); })) {
      tr.points.push_back({s, std::numeric_limits<double>::infinity(), up.eta});
      tr.diverged = true;
      return tr;
    }
    net.set_weights(std::move(up.weights));
    eta_prev = up.eta;
  }
  const double final_loss = loss_eval(net, data, LossKind::square);
  tr.points.push_back({opt.steps, final_loss, eta_prev});
  tr.diverged = !std::isfinite(final_loss);
  return tr;
}

void project_layers(WeightTuple& w, const Vector& radii) {
  if (radii.size() != w.size())
    throw Error(ErrorKind::dimension_mismatch, "one radius per layer required");
  for (std::size_t l = 0; l < w.size(); ++l) {
    const double n = frobenius_norm(w[l]);
    if (n == 0.0)
      throw Error(ErrorKind::degenerate_layer, "cannot project a zero layer");
    w[l] *= radii[l] / n;
  }
}

ProjectedResult train_margin_projected(MlpNet& net, const TrainSample& data,
                                       double gamma, const Vector& radii,
                                       const ProjectedOptions& opt) {
  if (!(gamma >= 0.0)) throw Error(ErrorKind::invalid_input, "gamma must be >= 0");
  TrainSample target{data.x, data.y};
  target.y *= gamma;
  const double ys = label_scale(target.y);
  const dln::UpdateOptions up_opt{dln::Flavour::conditioned, opt.fixed_eta, true};

  WeightTuple w = net.weights();
  project_layers(w, radii);
  net.set_weights(std::move(w));

  ProjectedResult res;
  for (std::size_t s = 0; s < opt.steps; ++s) {
    const auto lg = mlp_gradient(net, target);
    res.losses.push_back(lg.loss);
    if (!std::isfinite(lg.loss))
      throw Error(ErrorKind::diverged, "projected training diverged");
    auto up = dln::architecture_aware_update(net.weights(), lg.grads, ys, up_opt);
    if (up.skipped) break;
    project_layers(up.weights, radii);
    net.set_weights(std::move(up.weights));
  }
  res.final_loss = loss_eval(net, target, LossKind::square);
  res.losses.push_back(res.final_loss);

  double mean_sq = 0.0;
  for (double v : data.y.values()) mean_sq += v * v;
  mean_sq /= static_cast<double>(data.y.size());
  const double reference = 0.5 * gamma * gamma * mean_sq;
  if (res.final_loss > opt.fit_tolerance * reference) {
    res.fitted = false;
    res.warning = "did not interpolate: final loss " + std::to_string(res.final_loss) +
                  " vs target scale " + std::to_string(reference);
  }
  return res;
}

}  // namespace pmm::mlp
