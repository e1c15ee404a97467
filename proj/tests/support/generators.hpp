#pragma once

// Hand-rolled generators for property tests.

#include <cmath>
#include <cstdint>
#include <vector>

#include "pmm/numerics/matrix.hpp"
#include "pmm/numerics/rng.hpp"

namespace pmm::testing {

inline Matrix random_matrix(RngStream& rng, std::size_t r, std::size_t c,
                            double scale = 1.0) {
  std::vector<double> e(r * c);
  for (double& v : e) v = scale * rng.normal();
  return Matrix(r, c, std::move(e));
}

inline std::size_t random_int(RngStream& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

/// Point uniform on the sphere of radius √d.
inline Vector sphere_point(RngStream& rng, std::size_t d) {
  Vector x = gaussian_draws(rng, d);
  const double s = std::sqrt(static_cast<double>(d)) / norm2(x);
  for (double& v : x) v *= s;
  return x;
}

inline Matrix sphere_inputs(RngStream& rng, std::size_t m, std::size_t d) {
  Matrix x(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    Vector p = sphere_point(rng, d);
    std::copy(p.begin(), p.end(), x.row(i).begin());
  }
  return x;
}

inline Vector random_labels(RngStream& rng, std::size_t m) {
  Vector y(m);
  for (double& v : y) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return y;
}

/// W Wᵀ / k + ridge·I with W of shape n×k: a Wishart draw.
inline Matrix wishart(RngStream& rng, std::size_t n, std::size_t k,
                      double ridge = 0.0) {
  Matrix w = random_matrix(rng, n, k);
  Matrix g = matmul_nt(w, w);
  g *= 1.0 / static_cast<double>(k);
  for (std::size_t i = 0; i < n; ++i) g(i, i) += ridge;
  return g;
}

}  // namespace pmm::testing
