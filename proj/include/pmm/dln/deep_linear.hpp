#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pmm/numerics/matrix.hpp"

namespace pmm {

/// W_1..W_L with W_l of shape d_l × d_{l-1}.
using WeightTuple = std::vector<Matrix>;

/// Checks that the tuple is nonempty, chains, and is finite.
void validate_weights(const WeightTuple& w);
std::vector<std::size_t> widths_of(const WeightTuple& w);

/// RMS singular value ‖W‖_F / √min(rows, cols).
double rms_singular_value(const Matrix& w);

/// ‖Y‖₂/√m, the label scale entering η⋆ and η†. Rows of `y` are examples.
double label_scale(const Matrix& y);

/// Rescales each row of `x` onto the sphere of radius √cols.
Matrix project_to_sphere(Matrix x);
/// Throws invalid_input unless every row has norm √cols within `tol` relative.
void require_on_sphere(const Matrix& x, double tol = 1e-8);

}  // namespace pmm

namespace pmm::dln {

/// f(x) = W_L ⋯ W_1 x
class DeepLinearNet {
 public:
  explicit DeepLinearNet(WeightTuple weights);

  std::size_t depth() const noexcept { return w_.size(); }
  std::vector<std::size_t> widths() const { return widths_of(w_); }
  const WeightTuple& weights() const noexcept { return w_; }

 private:
  WeightTuple w_;
};

Vector dln_forward(const DeepLinearNet& net, std::span<const double> x);
/// Rows of `x` are inputs; returns m × d_L outputs.
Matrix dln_forward_batch(const WeightTuple& w, const Matrix& x);

/// √d_0 · Π ‖W_l‖_*
double output_scale(const DeepLinearNet& net);
/// Same product with RMS singular values in place of operator norms.
double output_scale_rms(const WeightTuple& w);

/// (1/2m)‖f_X − Y‖²_F
double dln_square_loss(const WeightTuple& w, const Matrix& x, const Matrix& y);
WeightTuple dln_square_loss_gradient(const WeightTuple& w, const Matrix& x,
                                     const Matrix& y);

struct PerturbationBoundReport {
  double first_order = 0;
  double second_order = 0;
  double output_scale = 0;
  Vector relative_sizes;        // ‖ΔW_l‖_* / ‖W_l‖_*
  double measured_change = 0;   // ‖Δf_X‖
  double measured_linearisation_error = 0;  // ‖Δf_X − ∇_w f_X Δw‖
};

PerturbationBoundReport perturbation_bounds(const DeepLinearNet& net,
                                            const WeightTuple& delta,
                                            const Matrix& x);

/// (√m F (e^η − 1), √m F (e^η − η − 1))
std::pair<double, double> ansatz_bounds(double f, double eta, std::size_t m);

/// ½ F (F + ‖Y‖/√m)(e^{2η} − 2η − 1)
double square_loss_majorisation_rhs(double f, double y_norm, std::size_t m,
                                    double eta);

enum class Flavour { operator_norm, conditioned };

/// η⋆ from exact operator norms; nullopt when any layer gradient is zero.
std::optional<double> eta_star(const WeightTuple& w, const WeightTuple& grads,
                               double y_scale);
/// η† under the conditioning assumption (RMS weights, Frobenius gradients).
std::optional<double> eta_dagger(const WeightTuple& w, const WeightTuple& grads,
                                 double y_scale);

struct UpdateOptions {
  Flavour flavour = Flavour::operator_norm;
  std::optional<double> fixed_eta;  // use instead of the closed form
  bool depth_scaling = true;        // the 1/L factor
};

struct UpdateResult {
  WeightTuple weights;
  double eta = 0;
  bool skipped = false;  // zero gradient somewhere; weights unchanged
};

/// W_l ← W_l − η (1/L) s_l ∇_l / n_l with (s_l, n_l) = (‖W_l‖_*, ‖∇_l‖_*)
/// for the operator-norm flavour and (RMS(W_l), ‖∇_l‖_F) when conditioned.
/// Throws ErrorKind::diverged when a layer or gradient norm overflows.
UpdateResult architecture_aware_update(const WeightTuple& w,
                                       const WeightTuple& grads,
                                       double y_scale,
                                       const UpdateOptions& opt = {});

struct TrainPoint {
  std::size_t step = 0;
  double loss = 0;
  double eta = 0;
};

struct Trajectory {
  std::vector<TrainPoint> points;  // points[0] is the initial loss
  WeightTuple final_weights;
  bool diverged = false;
};

/// Full-batch square-loss training with architecture_aware_update.
Trajectory train_dln(WeightTuple w, const Matrix& x, const Matrix& y,
                     std::size_t steps, const UpdateOptions& opt = {});

}  // namespace pmm::dln
