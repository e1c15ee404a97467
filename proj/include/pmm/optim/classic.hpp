#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <utility>
#include <variant>

#include "pmm/numerics/matrix.hpp"

namespace pmm::optim {

struct SmoothObjective {
  std::size_t dim = 0;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;  // may be empty
};

struct MirrorMap {
  std::function<double(const Vector&)> potential;
  std::function<Vector(const Vector&)> grad;
  // Should throw Error(domain) or return non-finite values outside the range
  // of grad; mirror_step checks for the latter.
  std::function<Vector(const Vector&)> grad_inverse;
};

/// ψ(w) = ½‖w‖²
MirrorMap euclidean_map();

/// Negative entropy ψ(w) = Σ w_i log w_i on the probability simplex. The
/// inverse gradient normalises, which makes the mirror step the
/// exponentiated-gradient update w ∝ w·exp(−∇L).
MirrorMap negative_entropy_map();

struct PredictorJacobian {
  Vector outputs;   // f_X, length m
  Matrix jacobian;  // ∇_w f_X, m×d
};

/// w − (1/λ)∇L(w)
Vector gd_step(const SmoothObjective& obj, const Vector& w, double lambda);

/// (∇ψ)⁻¹(∇ψ(w) − ∇L(w))
Vector mirror_step(const SmoothObjective& obj, const MirrorMap& map,
                   const Vector& w);

struct CubicSubproblem {
  Vector step;
  double radius = 0;        // ‖step‖
  bool hard_case = false;   // gradient orthogonal to the bottom eigenspace
};

/// Minimises gᵀΔ + ½ΔᵀHΔ + (λ/6)‖Δ‖³.
CubicSubproblem solve_cubic_subproblem(const Vector& g, const Matrix& h,
                                       double lambda);

/// w + argmin of the cubic model at w.
Vector cubic_newton_step(const SmoothObjective& obj, const Vector& w,
                         double lambda);

/// −(F_X + reg·I)⁻¹∇L₂ with F_X = (1/m)JᵀJ. With no reg given, uses
/// 1e-10·trace(F_X)/d.
Vector gauss_newton_step(const PredictorJacobian& pj, const Vector& labels,
                         std::optional<double> reg = std::nullopt);

namespace gap {
struct Euclidean {
  double lambda;
};
struct Cubic {
  double lambda;
};
struct Bregman {
  MirrorMap map;
};
struct LinearRegression {
  std::size_t d;
};
}  // namespace gap

using GapKind =
    std::variant<gap::Euclidean, gap::Cubic, gap::Bregman, gap::LinearRegression>;

struct Gap {
  double lhs = 0;  // L(w+Δw) minus the truncated Taylor model
  double rhs = 0;  // majorisation term
};

/// For the cubic kind the Taylor model includes the Hessian term; for the
/// others it stops at first order.
Gap majorisation_gap(const SmoothObjective& obj, const Vector& w,
                     const Vector& dw, const GapKind& kind);

}  // namespace pmm::optim
