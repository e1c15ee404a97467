#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmm/dln/deep_linear.hpp"
#include "pmm/numerics/matrix.hpp"
#include "pmm/numerics/rng.hpp"

namespace pmm::mlp {

enum class Nonlinearity { scaled_relu, relu, identity };

std::string_view to_string(Nonlinearity phi);
Nonlinearity parse_nonlinearity(std::string_view name);

/// f = W_L ∘ (φ ∘ W_{L−1}) ∘ … ∘ (φ ∘ W_1), with φ(z) = √2·max(0, z) for the
/// scaled relu.
class MlpNet {
 public:
  MlpNet(WeightTuple weights, Nonlinearity phi);

  std::size_t depth() const noexcept { return w_.size(); }
  std::vector<std::size_t> widths() const { return widths_of(w_); }
  Nonlinearity nonlinearity() const noexcept { return phi_; }
  const WeightTuple& weights() const noexcept { return w_; }
  /// Replaces the weights; shapes must match the current ones.
  void set_weights(WeightTuple w);

 private:
  WeightTuple w_;
  Nonlinearity phi_;
};

/// Inputs are the rows of x; targets are the rows of y (one column for
/// binary ±1 labels, several for one-hot regression targets).
struct TrainSample {
  Matrix x;
  Matrix y;
  std::size_t size() const noexcept { return x.rows(); }
};

Vector mlp_forward(const MlpNet& net, std::span<const double> x);
/// m × d_L outputs for the rows of x.
Matrix mlp_forward_batch(const MlpNet& net, const Matrix& x);

enum class LossKind { zero_one, square, logistic };

/// Zero-one uses sign(0) = +1 for a single output and argmax for several.
double loss_eval(const MlpNet& net, const TrainSample& s, LossKind kind);

struct LossSpec {
  LossKind kind = LossKind::square;  // square or logistic
  double l2 = 0.0;                   // adds λ Σ‖W_l‖²_F
};

/// Loss plus penalty, the quantity whose gradient mlp_gradient returns.
double objective(const MlpNet& net, const TrainSample& s, const LossSpec& spec);

struct LossAndGradient {
  double loss = 0;
  WeightTuple grads;
};

LossAndGradient mlp_gradient(const MlpNet& net, const TrainSample& s,
                             const LossSpec& spec = {});

struct MarginReport {
  double rho_star = 0;      // spectrally-normalised margin
  double rho_frobenius = 0; // RMS-singular-value-normalised margin
  double raw_min_margin = 0;
  Vector spectral_norms;
  Vector rms_norms;
};

/// Requires a single output and inputs on the radius-√d_0 sphere.
MarginReport margins(const MlpNet& net, const TrainSample& s);

/// iid Gaussian layers scaled so each RMS singular value is about one:
/// entry variance 1/max(d_l, d_{l−1}).
MlpNet init_rms_one(const std::vector<std::size_t>& widths, RngStream& rng,
                    Nonlinearity phi = Nonlinearity::scaled_relu);

struct TrainOptions {
  std::size_t steps = 100;
  std::size_t batch_size = 0;  // 0 = full batch
  dln::UpdateOptions update{dln::Flavour::conditioned, std::nullopt, true};
};

struct Trajectory {
  std::vector<dln::TrainPoint> points;  // points[0] is the initial loss
  bool diverged = false;
};

/// Square-loss training with the architecture-aware update. When batches
/// are used, `rng` chooses them and recorded losses are batch losses.
Trajectory train_architecture_aware(MlpNet& net, const TrainSample& data,
                                    const TrainOptions& opt,
                                    RngStream* rng = nullptr);

struct ProjectedResult {
  std::vector<double> losses;
  double final_loss = 0;
  bool fitted = true;
  std::string warning;
};

struct ProjectedOptions {
  std::size_t steps = 200;
  std::optional<double> fixed_eta;  // closed-form η† when empty
  double fit_tolerance = 0.05;      // final loss / (½γ²·mean y²) above this warns
};

/// Fits γ·Y under square loss with η† updates, rescaling every W_l back to
/// Frobenius norm radii[l] after each step.
ProjectedResult train_margin_projected(MlpNet& net, const TrainSample& data,
                                       double gamma, const Vector& radii,
                                       const ProjectedOptions& opt = {});

/// Rescales each layer to the given Frobenius norm.
void project_layers(WeightTuple& w, const Vector& radii);

}  // namespace pmm::mlp
