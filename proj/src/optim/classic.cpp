#include "pmm/optim/classic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"

namespace pmm::optim {
namespace {

bool finite(const Vector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector checked_gradient(const SmoothObjective& obj, const Vector& w) {
  if (w.size() != obj.dim)
    throw Error(ErrorKind::dimension_mismatch, "weights do not match objective");
  Vector g = obj.gradient(w);
  if (g.size() != obj.dim)
    throw Error(ErrorKind::dimension_mismatch, "gradient oracle size");
  if (!finite(g)) throw Error(ErrorKind::diverged, "non-finite gradient");
  return g;
}

Vector plus(const Vector& a, const Vector& b) {
  Vector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

}  // namespace

MirrorMap euclidean_map() {
  MirrorMap m;
  m.potential = [](const Vector& w) { return 0.5 * dot(w, w); };
  m.grad = [](const Vector& w) { return w; };
  m.grad_inverse = [](const Vector& t) { return t; };
  return m;
}

MirrorMap negative_entropy_map() {
  MirrorMap m;
  m.potential = [](const Vector& w) {
    double s = 0.0;
    for (double x : w) {
      if (x < 0.0) throw Error(ErrorKind::domain, "negative entropy: w < 0");
      if (x > 0.0) s += x * std::log(x);
    }
    return s;
  };
  m.grad = [](const Vector& w) {
    Vector g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!(w[i] > 0.0))
        throw Error(ErrorKind::domain, "negative entropy: gradient needs w > 0");
      g[i] = 1.0 + std::log(w[i]);
    }
    return g;
  };
  m.grad_inverse = [](const Vector& t) {
    if (t.empty()) throw Error(ErrorKind::domain, "negative entropy: empty");
    const double top = *std::max_element(t.begin(), t.end());
    Vector w(t.size());
    double z = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) z += w[i] = std::exp(t[i] - top);
    for (double& x : w) x /= z;
    return w;
  };
  return m;
}

Vector gd_step(const SmoothObjective& obj, const Vector& w, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::invalid_input, "gd_step: lambda <= 0");
  const Vector g = checked_gradient(obj, w);
  Vector out = w;
  axpy(-1.0 / lambda, g, out);
  return out;
}

Vector mirror_step(const SmoothObjective& obj, const MirrorMap& map,
                   const Vector& w) {
  const Vector g = checked_gradient(obj, w);
  Vector theta = map.grad(w);
  if (theta.size() != w.size() || !finite(theta))
    throw Error(ErrorKind::domain, "mirror map gradient undefined at w");
  axpy(-1.0, g, theta);
  Vector out = map.grad_inverse(theta);
  if (out.size() != w.size() || !finite(out))
    throw Error(ErrorKind::domain, "mirror map not invertible at the dual point");
  return out;
}

CubicSubproblem solve_cubic_subproblem(const Vector& g, const Matrix& h,
                                       double lambda) {
  if (!(lambda > 0.0))
    throw Error(ErrorKind::invalid_input, "cubic subproblem: lambda <= 0");
  const std::size_t d = g.size();
  if (h.rows() != d || h.cols() != d)
    throw Error(ErrorKind::dimension_mismatch, "cubic subproblem: Hessian shape");
  const auto eig = symmetric_eigen(h);
  const Vector& ev = eig.values;
  const Vector gt = matvec_t(eig.vectors, g);
  const double gnorm = norm2(g);
  const double lmin = ev.front();
  const double hscale =
      std::max({1.0, std::abs(ev.front()), std::abs(ev.back())});
  if (gnorm == 0.0 && lmin >= 0.0) return {Vector(d, 0.0), 0.0, false};

  const double r_low = std::max(0.0, -2.0 * lmin / lambda);
  // Eigen-directions whose shifted eigenvalue vanishes at r_low.
  std::vector<bool> bottom(d, false);
  for (std::size_t i = 0; i < d; ++i)
    bottom[i] = lmin < 0.0 && ev[i] - lmin <= 1e-12 * hscale;

  auto coeffs = [&](double r, bool skip_bottom) {
    Vector c(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      if (skip_bottom && bottom[i]) continue;
      c[i] = -gt[i] / (ev[i] + 0.5 * lambda * r);
    }
    return c;
  };
  auto to_step = [&](const Vector& c) { return matvec(eig.vectors, c); };

  if (lmin < 0.0) {
    double g_bottom = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      if (bottom[i]) g_bottom += gt[i] * gt[i];
    if (std::sqrt(g_bottom) <= 1e-12 * std::max(gnorm, 1e-300) || gnorm == 0.0) {
      Vector c = coeffs(r_low, true);
      const double n_low = norm2(c);
      if (n_low <= r_low) {
        // Hard case: fill the remaining radius along the bottom eigenvector.
        std::size_t k = 0;
        while (!bottom[k]) ++k;
        c[k] += std::sqrt(r_low * r_low - n_low * n_low);
        return {to_step(c), r_low, true};
      }
    }
  }

  auto excess = [&](double r) { return norm2(coeffs(r, false)) - r; };
  double lo = r_low, hi = r_low + 1.0;
  int doublings = 0;
  while (excess(hi) > 0.0) {
    hi = r_low + 2.0 * (hi - r_low);
    if (++doublings > 200)
      throw Error(ErrorKind::subproblem, "cubic subproblem: no radius bracket");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  const double r = hi;
  const double resid = std::abs(excess(r));
  if (!(resid <= 1e-8 * std::max(1.0, r)))
    throw Error(ErrorKind::subproblem,
                "cubic subproblem: bisection did not converge (residual " +
                    std::to_string(resid) + ")");
  return {to_step(coeffs(r, false)), r, false};
}

Vector cubic_newton_step(const SmoothObjective& obj, const Vector& w,
                         double lambda) {
  if (!obj.hessian)
    throw Error(ErrorKind::invalid_input, "cubic Newton needs a Hessian oracle");
  const Vector g = checked_gradient(obj, w);
  const Matrix h = obj.hessian(w);
  if (!h.all_finite()) throw Error(ErrorKind::diverged, "non-finite Hessian");
  return plus(w, solve_cubic_subproblem(g, h, lambda).step);
}

Vector gauss_newton_step(const PredictorJacobian& pj, const Vector& labels,
                         std::optional<double> reg) {
  const std::size_t m = pj.outputs.size();
  const std::size_t d = pj.jacobian.cols();
  if (pj.jacobian.rows() != m || labels.size() != m || m == 0)
    throw Error(ErrorKind::dimension_mismatch, "Gauss-Newton: shapes");
  const double inv_m = 1.0 / static_cast<double>(m);

  Vector resid(m);
  for (std::size_t i = 0; i < m; ++i) resid[i] = pj.outputs[i] - labels[i];
  Vector grad = matvec_t(pj.jacobian, resid);
  for (double& v : grad) v *= inv_m;
  if (std::all_of(grad.begin(), grad.end(), [](double v) { return v == 0.0; }))
    return Vector(d, 0.0);

  Matrix f = matmul_tn(pj.jacobian, pj.jacobian);
  f *= inv_m;
  const double r = reg.value_or(1e-10 * trace(f) / static_cast<double>(d));
  if (r < 0.0) throw Error(ErrorKind::invalid_input, "Gauss-Newton: reg < 0");
  for (std::size_t i = 0; i < d; ++i) f(i, i) += r;
  if (!cholesky_in_place(f))
    throw Error(ErrorKind::singular_curvature,
                "squared Jacobian is singular; increase reg");
  Vector step = chol_solve(f, grad);
  for (double& v : step) v = -v;
  return step;
}

Gap majorisation_gap(const SmoothObjective& obj, const Vector& w,
                     const Vector& dw, const GapKind& kind) {
  if (dw.size() != w.size())
    throw Error(ErrorKind::dimension_mismatch, "majorisation_gap: sizes");
  const double l0 = obj.value(w);
  const Vector g = checked_gradient(obj, w);
  const Vector w1 = plus(w, dw);
  const double first_order = l0 + dot(g, dw);
  const double dn = norm2(dw);

  return std::visit(
      [&](const auto& k) -> Gap {
        using K = std::decay_t<decltype(k)>;
        if (dn == 0.0) return {0.0, 0.0};
        if constexpr (std::is_same_v<K, gap::Euclidean>) {
          return {obj.value(w1) - first_order, 0.5 * k.lambda * dn * dn};
        } else if constexpr (std::is_same_v<K, gap::Cubic>) {
          if (!obj.hessian)
            throw Error(ErrorKind::invalid_input, "cubic gap needs a Hessian");
          const Vector hd = matvec(obj.hessian(w), dw);
          return {obj.value(w1) - first_order - 0.5 * dot(dw, hd),
                  k.lambda / 6.0 * dn * dn * dn};
        } else if constexpr (std::is_same_v<K, gap::Bregman>) {
          const double h = k.map.potential(w1) - k.map.potential(w) -
                           dot(k.map.grad(w), dw);
          return {obj.value(w1) - first_order, h};
        } else {
          return {obj.value(w1) - first_order,
                  0.5 * static_cast<double>(k.d) * dn * dn};
        }
      },
      kind);
}

}  // namespace pmm::optim
