#include <doctest.h>

#include <cmath>

#include "pmm/dln/deep_linear.hpp"
#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"
#include "support/generators.hpp"

using namespace pmm;
using namespace pmm::dln;
using namespace pmm::testing;

namespace {

WeightTuple random_weights(RngStream& rng, const std::vector<std::size_t>& d) {
  WeightTuple w;
  for (std::size_t l = 1; l < d.size(); ++l)
    w.push_back(random_matrix(rng, d[l], d[l - 1],
                              1.0 / std::sqrt(static_cast<double>(d[l - 1]))));
  return w;
}

std::vector<std::size_t> random_widths(RngStream& rng, std::size_t depth,
                                       std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> d(depth + 1);
  for (auto& v : d) v = random_int(rng, lo, hi);
  return d;
}

// Ansatz direction with relative size eta/L in operator norm.
WeightTuple ansatz_delta(const WeightTuple& w, const WeightTuple& g, double eta) {
  WeightTuple d;
  const double l = static_cast<double>(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    Matrix s = g[i];
    s *= -eta / l * spectral_norm(w[i], 1e-12, 5000) / spectral_norm(g[i], 1e-12, 5000);
    d.push_back(s);
  }
  return d;
}

}  // namespace

TEST_CASE("forward pass") {
  WeightTuple id{Matrix::identity(3), Matrix::identity(3)};
  const Vector x{1.0, -2.0, 0.5};
  CHECK(dln_forward(DeepLinearNet(id), x) == x);

  RngStream rng(1, 0);
  const auto w = random_weights(rng, {4, 5, 3});
  const Matrix prod = matmul(w[1], w[0]);
  const Vector x4 = gaussian_draws(rng, 4);
  const Vector a = dln_forward(DeepLinearNet(w), x4), b = matvec(prod, x4);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);

  const WeightTuple one{w[0]};
  CHECK(dln_forward(DeepLinearNet(one), x4) == matvec(w[0], x4));
  CHECK_THROWS_AS(dln_forward(DeepLinearNet(w), Vector(3)), Error);
  CHECK_THROWS_AS(DeepLinearNet(WeightTuple{Matrix(2, 3), Matrix(2, 3)}), Error);
}

TEST_CASE("homogeneity of degree L") {
  RngStream rng(2, 0);
  for (int t = 0; t < 50; ++t) {
    const std::size_t depth = random_int(rng, 1, 6);
    auto w = random_weights(rng, random_widths(rng, depth, 1, 10));
    const Vector x = gaussian_draws(rng, w[0].cols());
    const double sigma = 0.5 + rng.uniform();
    const Vector f = dln_forward(DeepLinearNet(w), x);
    for (auto& m : w) m *= sigma;
    const Vector fs = dln_forward(DeepLinearNet(w), x);
    const double k = std::pow(sigma, static_cast<double>(depth));
    for (std::size_t i = 0; i < f.size(); ++i)
      CHECK(std::abs(fs[i] - k * f[i]) <= 1e-10 * std::max(1.0, std::abs(k * f[i])));
  }
}

TEST_CASE("output scale") {
  WeightTuple id{Matrix::identity(4), Matrix::identity(4)};
  CHECK(output_scale(DeepLinearNet(id)) == doctest::Approx(2.0));
  const double d[2] = {3.0, 1.0};
  CHECK(output_scale(DeepLinearNet({Matrix::diagonal(d)})) ==
        doctest::Approx(3.0 * std::sqrt(2.0)));

  RngStream rng(3, 0);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t depth = random_int(rng, 1, 4);
    const auto w = random_weights(rng, random_widths(rng, depth, 1, 8));
    const DeepLinearNet net(w);
    const Vector x = sphere_point(rng, w[0].cols());
    CHECK(norm2(dln_forward(net, x)) <= output_scale(net) * (1 + 1e-9));
  }
}

TEST_CASE("perturbation bounds: trivial cases") {
  RngStream rng(4, 0);
  const auto w = random_weights(rng, {5, 4, 3, 2});
  const Matrix x = sphere_inputs(rng, 6, 5);
  WeightTuple zero;
  for (const auto& m : w) zero.emplace_back(m.rows(), m.cols());
  const auto r0 = perturbation_bounds(DeepLinearNet(w), zero, x);
  CHECK(r0.first_order == 0.0);
  CHECK(r0.second_order == 0.0);
  CHECK(r0.measured_change == 0.0);
  CHECK(r0.measured_linearisation_error == 0.0);

  const WeightTuple w1{w[0]};
  const WeightTuple d1{random_matrix(rng, 4, 5, 0.1)};
  const auto r1 = perturbation_bounds(DeepLinearNet(w1), d1, x);
  CHECK(r1.second_order == 0.0);
  CHECK(r1.measured_linearisation_error <= 1e-12);
  CHECK(r1.measured_change <= r1.first_order);

  WeightTuple degenerate = w;
  degenerate[1] = Matrix(3, 4);
  CHECK_THROWS_AS(perturbation_bounds(DeepLinearNet(degenerate), zero, x), Error);
  CHECK_THROWS_AS(perturbation_bounds(DeepLinearNet(w), zero, random_matrix(rng, 6, 5)),
                  Error);
}

TEST_CASE("perturbation bounds hold on random instances") {
  RngStream rng(5, 0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t depth = 3;
    const auto w = random_weights(rng, {8, 8, 8, 8});
    const Matrix x = sphere_inputs(rng, 4, 8);
    const double scale = std::pow(10.0, -4.0 + 4.0 * rng.uniform());
    WeightTuple delta;
    for (std::size_t l = 0; l < depth; ++l)
      delta.push_back(random_matrix(rng, 8, 8, scale / std::sqrt(8.0)));
    const auto r = perturbation_bounds(DeepLinearNet(w), delta, x);
    CHECK(r.measured_change <= r.first_order * (1 + 1e-9));
    CHECK(r.measured_linearisation_error <= r.second_order * (1 + 1e-9) + 1e-300);
    CHECK(r.second_order <= r.first_order);
  }
}

TEST_CASE("perturbation bound product structure") {
  // two and three layers: the bracket expands symbolically
  RngStream rng(6, 0);
  for (std::size_t depth : {2u, 3u}) {
    const auto w = random_weights(rng, std::vector<std::size_t>(depth + 1, 5));
    WeightTuple delta;
    for (std::size_t l = 0; l < depth; ++l) delta.push_back(random_matrix(rng, 5, 5, 0.1));
    const Matrix x = sphere_inputs(rng, 3, 5);
    const auto r = perturbation_bounds(DeepLinearNet(w), delta, x);
    const auto& s = r.relative_sizes;
    const double pre = std::sqrt(3.0) * r.output_scale;
    double expand, second;
    if (depth == 2) {
      expand = s[0] + s[1] + s[0] * s[1];
      second = s[0] * s[1];
    } else {
      expand = s[0] + s[1] + s[2] + s[0] * s[1] + s[0] * s[2] + s[1] * s[2] +
               s[0] * s[1] * s[2];
      second = s[0] * s[1] + s[0] * s[2] + s[1] * s[2] + s[0] * s[1] * s[2];
    }
    CHECK(r.first_order == doctest::Approx(pre * expand).epsilon(1e-12));
    CHECK(r.second_order == doctest::Approx(pre * second).epsilon(1e-12));
  }
}

TEST_CASE("ansatz bounds") {
  auto [a0, b0] = ansatz_bounds(1.0, 0.0, 1);
  CHECK(a0 == 0.0);
  CHECK(b0 == 0.0);
  auto [a1, b1] = ansatz_bounds(1.0, 1.0, 1);
  CHECK(a1 == doctest::Approx(std::exp(1.0) - 1.0));
  CHECK(b1 == doctest::Approx(std::exp(1.0) - 2.0));
  for (int l = 1; l <= 64; ++l)
    for (int k = 1; k <= 40; ++k) {
      const double eta = 0.1 * k;
      CHECK(std::pow(1.0 + eta / l, l) <= std::exp(eta) * (1 + 1e-15));
    }
  CHECK_THROWS_AS(ansatz_bounds(1.0, -1.0, 1), Error);
}

TEST_CASE("ansatz perturbations respect the exponential bounds") {
  RngStream rng(7, 0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t depth = random_int(rng, 1, 6);
    const auto w = random_weights(rng, random_widths(rng, depth, 2, 8));
    const Matrix x = sphere_inputs(rng, 5, w[0].cols());
    WeightTuple g;
    for (const auto& m : w) g.push_back(random_matrix(rng, m.rows(), m.cols()));
    const double eta = 2.0 * rng.uniform();
    const auto r = perturbation_bounds(DeepLinearNet(w), ansatz_delta(w, g, eta), x);
    auto [first, second] = ansatz_bounds(r.output_scale, eta, 5);
    CHECK(r.measured_change <= first * (1 + 1e-9));
    CHECK(r.measured_linearisation_error <= second * (1 + 1e-9));
    for (double s : r.relative_sizes)
      CHECK(s == doctest::Approx(eta / depth).epsilon(1e-8));
  }
}

TEST_CASE("square loss majorisation rhs") {
  CHECK(square_loss_majorisation_rhs(1.0, 0.0, 1, 0.0) == 0.0);
  CHECK(square_loss_majorisation_rhs(1.0, 0.0, 1, 0.5) ==
        doctest::Approx(0.5 * (std::exp(1.0) - 2.0)));
  CHECK(square_loss_majorisation_rhs(1.0, 0.0, 1, 0.5) == doctest::Approx(0.35914).epsilon(1e-5));
}

TEST_CASE("square loss majorisation holds under the ansatz") {
  RngStream rng(8, 0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t depth = random_int(rng, 1, 5);
    auto d = random_widths(rng, depth, 2, 8);
    d.back() = random_int(rng, 1, 3);
    const auto w = random_weights(rng, d);
    const std::size_t m = random_int(rng, 1, 8);
    const Matrix x = sphere_inputs(rng, m, d[0]);
    const Matrix y = random_matrix(rng, m, d.back());
    const auto g = dln_square_loss_gradient(w, x, y);
    const double eta = 1.5 * rng.uniform();
    const auto delta = ansatz_delta(w, g, eta);
    WeightTuple w1 = w;
    double lin = 0.0;
    for (std::size_t l = 0; l < depth; ++l) {
      w1[l] += delta[l];
      lin += dot(g[l].values(), delta[l].values());
    }
    const double lhs = dln_square_loss(w1, x, y) - dln_square_loss(w, x, y) - lin;
    const double rhs = square_loss_majorisation_rhs(output_scale(DeepLinearNet(w)),
                                                    frobenius_norm(y), m, eta);
    CHECK(lhs <= rhs * (1 + 1e-9) + 1e-14);
  }
}

TEST_CASE("square loss gradient matches finite differences") {
  RngStream rng(9, 0);
  const auto w = random_weights(rng, {4, 3, 5, 2});
  const Matrix x = sphere_inputs(rng, 6, 4);
  const Matrix y = random_matrix(rng, 6, 2);
  const auto g = dln_square_loss_gradient(w, x, y);
  for (std::size_t l = 0; l < w.size(); ++l)
    for (std::size_t k = 0; k < w[l].size(); ++k) {
      WeightTuple a = w, b = w;
      a[l].values()[k] += 1e-5;
      b[l].values()[k] -= 1e-5;
      const double fd = (dln_square_loss(a, x, y) - dln_square_loss(b, x, y)) / 2e-5;
      CHECK(std::abs(fd - g[l].values()[k]) <= 1e-7 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("eta star") {
  const WeightTuple w{Matrix(1, 1, {1.0})}, g{Matrix(1, 1, {1.0})};
  CHECK(*eta_star(w, g, 0.0) == doctest::Approx(0.5 * std::log(2.0)));
  CHECK_FALSE(eta_star(w, WeightTuple{Matrix(1, 1)}, 0.0).has_value());

  RngStream rng(10, 0);
  const auto wr = random_weights(rng, {5, 4, 3});
  WeightTuple gr;
  for (const auto& m : wr) gr.push_back(random_matrix(rng, m.rows(), m.cols()));
  const double e1 = *eta_star(wr, gr, 0.7);
  const double c = 3.7;
  WeightTuple gc = gr;
  for (auto& m : gc) m *= c;
  const double ec = *eta_star(wr, gc, 0.7);
  CHECK(std::expm1(2 * ec) == doctest::Approx(c * std::expm1(2 * e1)).epsilon(1e-8));

  WeightTuple tiny = gr;
  for (auto& m : tiny) m *= 1e-12;
  CHECK(*eta_star(wr, tiny, 0.7) < 1e-10);
}

TEST_CASE("eta dagger equals eta star for well-conditioned rank-one cases") {
  // orthogonal weights (all singular values equal) and rank-one gradients
  const std::size_t n = 4;
  WeightTuple w{Matrix::identity(n), 2.0 * Matrix::identity(n)};
  Matrix u(n, n);
  u(0, 1) = 1.5;
  WeightTuple g{u, u};
  CHECK(*eta_dagger(w, g, 0.3) == doctest::Approx(*eta_star(w, g, 0.3)).epsilon(1e-10));
}

TEST_CASE("architecture aware update") {
  RngStream rng(11, 0);
  const auto w = random_weights(rng, {6, 5, 4, 3});
  WeightTuple zero;
  for (const auto& m : w) zero.emplace_back(m.rows(), m.cols());
  const auto skip = architecture_aware_update(w, zero, 1.0);
  CHECK(skip.skipped);
  CHECK(skip.weights == w);

  WeightTuple g;
  for (const auto& m : w) g.push_back(random_matrix(rng, m.rows(), m.cols()));
  const auto up = architecture_aware_update(w, g, 1.0);
  for (std::size_t l = 0; l < 3; ++l) {
    const Matrix dw = up.weights[l] - w[l];
    CHECK(spectral_norm(dw, 1e-13, 10000) / spectral_norm(w[l], 1e-13, 10000) ==
          doctest::Approx(up.eta / 3).epsilon(1e-10));
  }
  const auto upc = architecture_aware_update(w, g, 1.0, {Flavour::conditioned});
  for (std::size_t l = 0; l < 3; ++l) {
    const Matrix dw = upc.weights[l] - w[l];
    CHECK(frobenius_norm(dw) / rms_singular_value(w[l]) ==
          doctest::Approx(upc.eta / 3).epsilon(1e-10));
  }
  const auto fixed = architecture_aware_update(w, g, 1.0, {Flavour::conditioned, 0.25, false});
  CHECK(fixed.eta == 0.25);
  const Matrix dw0 = fixed.weights[0] - w[0];
  CHECK(frobenius_norm(dw0) == doctest::Approx(0.25 * rms_singular_value(w[0])));
}

TEST_CASE("eta-star training descends monotonically") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream rng(100 + seed, 0);
    const auto w = random_weights(rng, {8, 16, 16, 1});
    const Matrix x = sphere_inputs(rng, 20, 8);
    const Matrix y = random_matrix(rng, 20, 1);
    const auto tr = train_dln(w, x, y, 100);
    REQUIRE_FALSE(tr.diverged);
    for (std::size_t s = 1; s < tr.points.size(); ++s)
      CHECK(tr.points[s].loss <= tr.points[s - 1].loss + 1e-12);
    CHECK(tr.points.back().loss < tr.points.front().loss);
  }
}

TEST_CASE("sphere helpers") {
  RngStream rng(12, 0);
  const Matrix x = project_to_sphere(random_matrix(rng, 5, 7));
  CHECK_NOTHROW(require_on_sphere(x));
  for (std::size_t i = 0; i < 5; ++i) CHECK(norm2(x.row(i)) == doctest::Approx(std::sqrt(7.0)));
  CHECK_THROWS_AS(project_to_sphere(Matrix(1, 3)), Error);
  CHECK(label_scale(Matrix(4, 1, {1, -1, 1, -1})) == doctest::Approx(1.0));
}
