#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <numbers>

#include "pmm/bounds/pac_bayes.hpp"
#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"
#include "support/generators.hpp"

using namespace pmm;
using namespace pmm::bounds;
using namespace pmm::testing;
using pmm::gp::gram_from_matrix;

namespace {

Matrix correlation2(double rho) { return Matrix::from_rows({{1.0, rho}, {rho, 1.0}}); }

// Trivariate orthant probability P[Y_i f_i > 0 ∀i] for f ~ Normal(0, K).
double trivariate_orthant(const Matrix& k, const Vector& y) {
  double s = 0.125;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) {
      const double rho = y[i] * y[j] * k(i, j) / std::sqrt(k(i, i) * k(j, j));
      s += std::asin(rho) / (4 * std::numbers::pi);
    }
  return s;
}

// Kernel complexity through an eigendecomposition.
double complexity_oracle(const Matrix& k, const Vector& y) {
  const auto eig = symmetric_eigen(k);
  const std::size_t m = k.rows();
  double logdet = 0, tr = 0, quad = 0;
  for (std::size_t a = 0; a < m; ++a) {
    logdet += std::log(eig.values[a]);
    tr += 1 / eig.values[a];
    double proj = 0;
    for (std::size_t i = 0; i < m; ++i) proj += eig.vectors(i, a) * y[i];
    quad += proj * proj / eig.values[a];
  }
  const double md = static_cast<double>(m);
  return md * (std::log(2.0) - 0.5) +
         std::exp(logdet / md) * ((0.5 - 1 / std::numbers::pi) * tr + quad / std::numbers::pi);
}

double gaussian_density(const Matrix& inv, double logdet, const Vector& f) {
  const double q = dot(f, matvec(inv, f));
  return std::exp(-0.5 * q - 0.5 * logdet - 0.5 * f.size() * std::log(2 * std::numbers::pi));
}

}  // namespace

TEST_CASE("vc bound") {
  BoundInputs in{1000, 0.05, 0.0, 10.0};
  CHECK(vc_bound(in) == doctest::Approx(std::sqrt(0.008 * (10 + std::log(80.0)))).epsilon(1e-14));

  BoundInputs full{50, 0.05, 0.0, 2 * 50 * std::log(2.0)};
  CHECK(vc_bound(full) > std::sqrt(8 * std::log(2.0) * 2));
  CHECK(is_vacuous(vc_bound(full)));

  double prev = 1e9;
  for (std::size_t m = 10; m <= 10000; m *= 2) {
    const double b = vc_bound({m, 0.1, 0.05, 12.0});
    CHECK(b < prev);
    prev = b;
  }
  try {
    vc_bound({100, 0.05, 0.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::missing_field);
  }
}

TEST_CASE("stability bound") {
  BoundInputs in{100, 0.05, 0.1};
  in.stability = 0.0;
  CHECK(stability_bound(in) == doctest::Approx(0.1 + std::sqrt(std::log(20.0) / 200)).epsilon(1e-14));
  in.train_error = 0.0;
  in.stability = 0.01;
  CHECK(stability_bound(in) == doctest::Approx(0.02 + 5 * std::sqrt(std::log(20.0) / 200)).epsilon(1e-14));
  double prev = -1;
  for (double beta = 0; beta < 0.1; beta += 0.005) {
    in.stability = beta;
    CHECK(stability_bound(in) > prev);
    prev = stability_bound(in);
  }
  in.stability.reset();
  CHECK_THROWS_AS(stability_bound(in), Error);
}

TEST_CASE("kl inversion") {
  for (double p : {0.0, 0.1, 0.37, 0.9}) CHECK(kl_inverse_bound(p, 0.0) == doctest::Approx(p).epsilon(1e-12));
  for (double cap = 0.0; cap < 5.0; cap += 0.01)
    CHECK(std::abs(kl_inverse_bound(0.0, cap) - (1 - std::exp(-cap))) <= 1e-9);
  CHECK(kl_inverse_bound(1.0, 0.3) == 1.0);
}

TEST_CASE("kl inversion agrees with a grid scan") {
  for (auto [p, cap] : {std::pair{0.05, 0.02}, {0.2, 0.1}, {0.0, 0.5}, {0.6, 0.01}}) {
    double best = p;
    for (int i = 0; i <= 1000000; ++i) {
      const double q = i * 1e-6;
      if (q >= p && kl_bernoulli(p, q) <= cap) best = q;
    }
    CHECK(std::abs(kl_inverse_bound(p, cap) - best) <= 1e-5);
  }
}

TEST_CASE("kl bernoulli") {
  CHECK(kl_bernoulli(0.3, 0.3) == 0.0);
  CHECK(kl_bernoulli(0.0, 0.5) == doctest::Approx(std::log(2.0)));
  CHECK(std::isinf(kl_bernoulli(0.2, 0.0)));
  CHECK_THROWS_AS(kl_bernoulli(1.2, 0.5), Error);
}

TEST_CASE("orthant probability of the identity is exact") {
  RngStream rng(1, 0);
  const auto g = gram_from_matrix(Matrix::identity(4));
  const auto est = orthant_prob(g, Vector{1, -1, 1, 1}, rng);
  CHECK(est.method == OrthantMethod::exact_diagonal);
  CHECK(std::abs(std::exp(est.log_prob) - 1.0 / 16) <= 1e-12);
}

TEST_CASE("orthant Monte Carlo on the identity") {
  RngStream rng(2, 0);
  const auto g = gram_from_matrix(Matrix::identity(4));
  OrthantOptions opt;
  opt.exact_diagonal = false;
  const auto est = orthant_prob(g, Vector{1, -1, 1, 1}, rng, opt);
  CHECK(est.method == OrthantMethod::monte_carlo);
  CHECK(est.samples == 1'000'000);
  CHECK(std::abs(std::exp(est.log_prob) - 1.0 / 16) <= 3 * est.std_error);
}

TEST_CASE("bivariate orthant probability") {
  RngStream rng(3, 0);
  for (double rho : {0.5, 0.9, 0.999, -0.7}) {
    const auto g = gram_from_matrix(correlation2(rho));
    OrthantOptions opt;
    opt.samples = 200000;
    const auto est = orthant_prob(g, Vector{1, 1}, rng, opt);
    const double exact = 0.25 + std::asin(rho) / (2 * std::numbers::pi);
    CHECK(std::abs(std::exp(est.log_prob) - exact) <= 3 * est.std_error);
  }
}

TEST_CASE("trivariate orthant probability") {
  RngStream rng(4, 0);
  for (int t = 0; t < 10; ++t) {
    const Matrix k = wishart(rng, 3, 4, 0.05);
    const Vector y = random_labels(rng, 3);
    OrthantOptions opt;
    opt.samples = 100000;
    const auto est = orthant_prob(gram_from_matrix(k), y, rng, opt);
    CHECK(std::abs(std::exp(est.log_prob) - trivariate_orthant(k, y)) <= 4 * est.std_error);
  }
}

TEST_CASE("orthant estimate is independent of worker count") {
  RngStream a(5, 1), b(5, 1);
  const auto g = gram_from_matrix(correlation2(0.3));
  OrthantOptions o1{50000, 1, 4096}, o3{50000, 3, 4096};
  CHECK(orthant_prob(g, Vector{1, -1}, a, o1).hits == orthant_prob(g, Vector{1, -1}, b, o3).hits);
}

TEST_CASE("orthant with no hits is flagged") {
  RngStream rng(6, 0);
  const std::size_t m = 30;
  Matrix k(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) k(i, j) = i == j ? 1.0 : 0.98;
  Vector y(m);
  for (std::size_t i = 0; i < m; ++i) y[i] = i % 2 ? 1.0 : -1.0;
  OrthantOptions opt;
  opt.samples = 10000;
  const auto est = orthant_prob(gram_from_matrix(k), y, rng, opt);
  CHECK(est.zero_hits);
  CHECK(est.log_prob == doctest::Approx(std::log(3e-4)));
}

TEST_CASE("kernel complexity") {
  CHECK(kernel_complexity(gram_from_matrix(Matrix::identity(2), 0.0), Vector{1, -1}) ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-14));
  CHECK(std::abs(kernel_complexity(gram_from_matrix(Matrix::identity(4)), Vector{1, 1, -1, 1}) -
                 4 * std::log(2.0)) <= 1e-12);

  RngStream rng(7, 0);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = random_int(rng, 2, 15);
    const Matrix k = wishart(rng, m, m + 3, 0.1);
    const Vector y = random_labels(rng, m);
    const double a = kernel_complexity(gram_from_matrix(k, 0.0), y);
    CHECK(a == doctest::Approx(complexity_oracle(k, y)).epsilon(1e-10));
    const double c = 0.01 + 100 * rng.uniform();
    Matrix kc = k;
    kc *= c;
    CHECK(kernel_complexity(gram_from_matrix(kc, 0.0), y) == doctest::Approx(a).epsilon(1e-10));
  }
}

TEST_CASE("orthant log probability never exceeds the complexity") {
  RngStream rng(8, 0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = random_int(rng, 2, 8);
    const Matrix k = wishart(rng, m, m + random_int(rng, 0, 6), 0.05);
    const Vector y = random_labels(rng, m);
    const auto g = gram_from_matrix(k);
    OrthantOptions opt;
    opt.samples = 20000;
    const auto est = orthant_prob(g, y, rng, opt);
    const auto kv = kl_values(g, y, est);
    CHECK(kv.consistent);
    CHECK(-est.log_prob - 3 * est.log_std_error <= kernel_complexity(g, y));
  }
  const auto kv = kl_values(gram_from_matrix(Matrix::identity(5)), Vector(5, 1.0),
                            orthant_prob(gram_from_matrix(Matrix::identity(5)), Vector(5, 1.0), rng));
  CHECK(kv.kl_gp == doctest::Approx(5 * std::log(2.0)).epsilon(1e-12));
  CHECK(kv.kl_sph == doctest::Approx(5 * std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("GP and BPM bound reports") {
  RngStream rng(9, 0);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = random_int(rng, 3, 10);
    const Matrix k = wishart(rng, m, m + 2, 0.05);
    const Vector y = random_labels(rng, m);
    const auto g = gram_from_matrix(k);
    OrthantOptions opt;
    opt.samples = 50000;
    const auto est = orthant_prob(g, y, rng, opt);
    const auto gibbs = gp_pac_bayes_bounds(g, y, est, 0.05);
    const auto bpm = kernel_bpm_bounds(g, y, est, 0.05);

    OrthantEstimate low = est;
    low.log_prob += 3 * est.log_std_error;
    CHECK(gp_pac_bayes_bounds(g, y, low, 0.05).at("gp_orthant").value <=
          gibbs.at("gp_complexity").value);
    CHECK(gibbs.at("gp_complexity").value == gibbs.at("sph_complexity").value);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(bpm.entries[i].value == std::numbers::e * gibbs.entries[i].value);
      CHECK(bpm.entries[i].vacuous == (bpm.entries[i].value >= 1.0));
    }
  }
  const auto eye = gram_from_matrix(Matrix::identity(6));
  const Vector y(6, 1.0);
  const auto r = gp_pac_bayes_bounds(eye, y, orthant_prob(eye, y, rng), 0.05);
  CHECK(r.at("gp_orthant").value == doctest::Approx(r.at("gp_complexity").value).epsilon(1e-9));
  CHECK_THROWS_AS(r.at("nonexistent"), Error);
}

TEST_CASE("realisable bound shape") {
  double prev = 1.0;
  for (std::size_t m = 2; m < 1000000; m *= 3) {
    const double b = realisable_bound(pac_bayes_cap(5.0, m, 0.05));
    CHECK(b < prev);
    prev = b;
  }
  CHECK(prev < 1e-3);
  CHECK(realisable_bound(pac_bayes_cap(1.0, 100, 0.05)) < realisable_bound(pac_bayes_cap(2.0, 100, 0.05)));
  CHECK_THROWS_AS(pac_bayes_cap(1.0, 1, 0.05), Error);
}

TEST_CASE("bound report serialises to flat JSON") {
  BoundInputs in{200, 0.05, 0.1, 20.0};
  in.stability = 0.001;
  in.kl = 3.0;
  const auto r = classic_bounds(in);
  REQUIRE(r.entries.size() == 3);
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.size() == 3);
  CHECK(j["vc"]["value"].get<double>() == doctest::Approx(vc_bound(in)));
  CHECK(j["vc"]["inputs"]["m"].get<double>() == 200);
  CHECK(j["stability"]["vacuous_flag"].get<bool>() == is_vacuous(stability_bound(in)));
  CHECK(j["pac_bayes"]["value"].get<double>() ==
        doctest::Approx(kl_inverse_bound(0.1, pac_bayes_cap(3.0, 200, 0.05))));
}

TEST_CASE("KL chain rule on a three point input space") {
  // Training inputs X = {x1, x2}, remaining input x3. The spherised posterior
  // replaces the law of f_X and keeps the prior conditional of f_3 given f_X.
  const Matrix k = Matrix::from_rows({{1.0, 0.4, 0.3}, {0.4, 1.0, 0.5}, {0.3, 0.5, 1.0}});
  const Vector y{1.0, -1.0};
  const Matrix kxx = Matrix::from_rows({{1.0, 0.4}, {0.4, 1.0}});
  const auto gx = gram_from_matrix(kxx, 0.0);
  const Matrix inv_x = chol_inverse(gx.chol.factor);
  const auto g3 = gram_from_matrix(k, 0.0);
  const Matrix inv3 = chol_inverse(g3.chol.factor);
  const double scale2 = std::exp(gx.logdet() / 2);  // half-normal variance

  const Vector kx3{0.3, 0.5};
  const Vector w = matvec(inv_x, kx3);
  const double cond_var = 1.0 - dot(kx3, w);

  auto q_x = [&](double f1, double f2) {
    if (f1 * y[0] <= 0 || f2 * y[1] <= 0) return 0.0;
    return 4 * std::exp(-(f1 * f1 + f2 * f2) / (2 * scale2)) / (2 * std::numbers::pi * scale2);
  };

  const int n = 140;
  const double lo = -7.0, h = 14.0 / n;
  double kl_x = 0, kl_full = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const double f1 = lo + (a + 0.5) * h, f2 = lo + (b + 0.5) * h;
      const double q = q_x(f1, f2);
      if (q == 0) continue;
      const double p = gaussian_density(inv_x, gx.logdet(), {f1, f2});
      kl_x += q * std::log(q / p) * h * h;
      const double mu = w[0] * f1 + w[1] * f2;
      for (int c = 0; c < n; ++c) {
        const double f3 = lo + (c + 0.5) * h;
        const double cond = std::exp(-(f3 - mu) * (f3 - mu) / (2 * cond_var)) /
                            std::sqrt(2 * std::numbers::pi * cond_var);
        const double qf = q * cond;
        const double pf = gaussian_density(inv3, g3.logdet(), {f1, f2, f3});
        if (qf > 0) kl_full += qf * std::log(qf / pf) * h * h * h;
      }
    }
  CHECK(kl_full == doctest::Approx(kl_x).epsilon(1e-3));
  CHECK(kl_x == doctest::Approx(kernel_complexity(gx, y)).epsilon(1e-3));
}
