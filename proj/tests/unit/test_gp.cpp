#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pmm/gp/kernel_gp.hpp"
#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"
#include "support/generators.hpp"

using namespace pmm;
using namespace pmm::gp;
using namespace pmm::testing;

namespace {

// Kernel given by a lookup table; inputs are one-element rows holding an index.
Kernel table_kernel(const Matrix& table) {
  return Kernel::custom([table](std::span<const double> a, std::span<const double> b) {
    return table(static_cast<std::size_t>(a[0]), static_cast<std::size_t>(b[0]));
  });
}

Matrix index_inputs(std::size_t m) {
  Matrix x(m, 1);
  for (std::size_t i = 0; i < m; ++i) x(i, 0) = static_cast<double>(i);
  return x;
}

double h_direct(double t) {
  return (std::sqrt(1 - t * t) + t * (std::numbers::pi - std::acos(t))) / std::numbers::pi;
}

Kernel random_kernel(RngStream& rng) {
  if (rng.uniform() < 0.5) return Kernel::gaussian(0.5 + 2.0 * rng.uniform());
  return Kernel::arccos(random_int(rng, 2, 5));
}

double min_eigenvalue(const Matrix& a) { return symmetric_eigen(a).values.front(); }

}  // namespace

TEST_CASE("gaussian kernel values") {
  const Vector x{0.3, -1.2, 2.0};
  CHECK(gaussian_kernel(x, x, 0.7) == 1.0);
  const Vector a{0.0, 0.0}, b{1.0, 1.0};
  CHECK(gaussian_kernel(a, b, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  RngStream rng(1, 0);
  for (int t = 0; t < 100; ++t) {
    const Vector p = gaussian_draws(rng, 5), q = gaussian_draws(rng, 5);
    CHECK(gaussian_kernel(p, q, 1.3) == gaussian_kernel(q, p, 1.3));
  }
  CHECK_THROWS_AS(gaussian_kernel(a, b, 0.0), Error);
}

TEST_CASE("arccos kernel values") {
  RngStream rng(2, 0);
  const Vector x = sphere_point(rng, 6);
  for (std::size_t depth = 1; depth <= 8; ++depth)
    CHECK(arccos_kernel(x, x, depth) == doctest::Approx(1.0).epsilon(1e-12));

  const Vector e1{std::sqrt(2.0), 0.0}, e2{0.0, std::sqrt(2.0)};
  CHECK(arccos_kernel(e1, e2, 2) == doctest::Approx(1.0 / std::numbers::pi).epsilon(1e-14));
  CHECK(arccos_kernel(e1, e2, 1) == 0.0);
  const Vector m1{-std::sqrt(2.0), 0.0};
  CHECK(std::abs(arccos_kernel(e1, m1, 2)) < 1e-15);

  for (int t = 0; t < 50; ++t) {
    const Vector p = sphere_point(rng, 7), q = sphere_point(rng, 7);
    const double t0 = dot(p, q) / 7.0;
    CHECK(arccos_kernel(p, q, 3) == doctest::Approx(h_direct(h_direct(t0))).epsilon(1e-12));
    CHECK(arccos_kernel(p, q, 3) == arccos_kernel(q, p, 3));
  }
}

TEST_CASE("arccos kernel domain checks") {
  CHECK_THROWS_AS(arccos_step(1.0 + 1e-6), Error);
  CHECK(arccos_step(1.0 + 1e-12) == doctest::Approx(1.0));
  const Vector off{1.0, 0.0};
  const Vector on{std::sqrt(2.0), 0.0};
  try {
    arccos_kernel(off, on, 2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_input);
  }
  CHECK_THROWS_AS(Kernel::arccos(0), Error);
}

TEST_CASE("layer map is monotone with fixed point one") {
  CHECK(arccos_step(1.0) == doctest::Approx(1.0).epsilon(1e-15));
  double prev = arccos_step(-1.0);
  for (int i = 1; i <= 2000; ++i) {
    const double t = -1.0 + i / 1000.0;
    const double v = arccos_step(t);
    CHECK(v >= prev);
    CHECK(v >= t - 1e-15);
    prev = v;
  }
}

TEST_CASE("gram matrices are symmetric and factorise") {
  RngStream rng(3, 0);
  for (int t = 0; t < 40; ++t) {
    const std::size_t m = random_int(rng, 1, 64), d = random_int(rng, 2, 20);
    const Matrix x = sphere_inputs(rng, m, d);
    const Kernel k = random_kernel(rng);
    const GramBundle g = make_gram(k, x);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) CHECK(g.k(i, j) == g.k(j, i));
    Matrix rec = matmul_nt(g.chol.factor, g.chol.factor);
    for (std::size_t i = 0; i < m; ++i) rec(i, i) -= g.chol.jitter;
    double err = 0;
    for (std::size_t i = 0; i < rec.size(); ++i)
      err = std::max(err, std::abs(rec.values()[i] - g.k.values()[i]));
    CHECK(err < 1e-10);
  }
}

TEST_CASE("kernel cross matrix matches pointwise evaluation") {
  RngStream rng(4, 0);
  const Matrix a = sphere_inputs(rng, 7, 5), b = sphere_inputs(rng, 4, 5);
  for (const Kernel& k : {Kernel::gaussian(1.1), Kernel::arccos(3)}) {
    const Matrix c = k.cross(a, b);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(c(i, j) == doctest::Approx(k(a.row(i), b.row(j))).epsilon(1e-13));
  }
}

TEST_CASE("interpolation with identity gram returns the labels") {
  const Kernel k = table_kernel(Matrix::identity(5));
  const GramBundle g = make_gram(k, index_inputs(5));
  const Vector y{1, -1, -1, 1, 1};
  const Interpolant f = min_norm_interpolate(g, y);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(f.alpha[i] == doctest::Approx(y[i]).epsilon(1e-9));
    CHECK(f(g.x.row(i)) == doctest::Approx(y[i]).epsilon(1e-9));
  }
  CHECK(rkhs_norm(g, y) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));
  CHECK(rkhs_norm(g, Vector(5, 0.0)) == 0.0);
}

TEST_CASE("single point interpolation") {
  RngStream rng(5, 0);
  const Kernel k = Kernel::gaussian(0.8);
  const Matrix x = random_matrix(rng, 1, 3);
  const GramBundle g = make_gram(k, x);
  const Interpolant f = min_norm_interpolate(g, Vector{-2.5});
  for (int t = 0; t < 20; ++t) {
    const Vector q = gaussian_draws(rng, 3);
    CHECK(f(q) == doctest::Approx(k(q, x.row(0)) * -2.5).epsilon(1e-9));
  }
}

TEST_CASE("interpolant fits the training data") {
  RngStream rng(6, 0);
  for (int t = 0; t < 30; ++t) {
    const std::size_t m = random_int(rng, 2, 30);
    const Matrix x = sphere_inputs(rng, m, 10);
    const GramBundle g = make_gram(random_kernel(rng), x);
    const Vector y = random_labels(rng, m);
    const Vector fit = min_norm_interpolate(g, y).predict(x);
    for (std::size_t i = 0; i < m; ++i) CHECK(fit[i] == doctest::Approx(y[i]).epsilon(1e-6));
  }
}

TEST_CASE("competing interpolators have larger RKHS norm") {
  RngStream rng(7, 0);
  for (int t = 0; t < 50; ++t) {
    const std::size_t m = random_int(rng, 2, 12), extra = random_int(rng, 1, 6);
    const Kernel k = random_kernel(rng);
    const Matrix x = sphere_inputs(rng, m, 6);
    const Matrix z = sphere_inputs(rng, extra, 6);
    const Vector y = random_labels(rng, m);
    const GramBundle g = make_gram(k, x, 0.0);
    const Interpolant fstar = min_norm_interpolate(g, y);
    const double n_star = rkhs_norm(g, fstar.alpha);

    // g = Σ β_i k(·, x_i) + Σ c_j k(·, z_j) with β refit so g interpolates.
    const Vector c = gaussian_draws(rng, extra);
    const Vector kxz_c = matvec(k.cross(x, z), c);
    Vector r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = y[i] - kxz_c[i];
    const Vector beta = g.solve(r);

    Matrix all(m + extra, 6);
    for (std::size_t i = 0; i < m; ++i) std::copy(x.row(i).begin(), x.row(i).end(), all.row(i).begin());
    for (std::size_t j = 0; j < extra; ++j)
      std::copy(z.row(j).begin(), z.row(j).end(), all.row(m + j).begin());
    const Matrix kall = k.gram(all);
    Vector coef(beta);
    coef.insert(coef.end(), c.begin(), c.end());
    const double ng2 = dot(coef, matvec(kall, coef));
    Vector diff = coef;
    for (std::size_t i = 0; i < m; ++i) diff[i] -= fstar.alpha[i];
    const double nd2 = dot(diff, matvec(kall, diff));

    CHECK(ng2 >= n_star * n_star * (1 - 1e-9));
    CHECK(ng2 == doctest::Approx(n_star * n_star + nd2).epsilon(1e-6));
  }
}

TEST_CASE("RKHS functions are Lipschitz in the kernel metric") {
  RngStream rng(8, 0);
  for (int t = 0; t < 20; ++t) {
    const Kernel k = random_kernel(rng);
    const Matrix x = sphere_inputs(rng, 8, 5);
    const GramBundle g = make_gram(k, x);
    const Vector alpha = gaussian_draws(rng, 8);
    const Interpolant f{alpha, k, x};
    const double norm = rkhs_norm(g, alpha);
    for (int p = 0; p < 50; ++p) {
      const Vector a = sphere_point(rng, 5), b = sphere_point(rng, 5);
      const double d2 = k(a, a) + k(b, b) - 2 * k(a, b);
      CHECK(std::abs(f(a) - f(b)) <= norm * std::sqrt(std::max(d2, 0.0)) + 1e-12);
    }
  }
}

TEST_CASE("rkhs norm rejects indefinite forms") {
  const Matrix bad = Matrix::from_rows({{1.0, 2.0}, {2.0, 1.0}});
  GramBundle g{{}, bad, chol_logdet(Matrix::identity(2)), std::nullopt};
  CHECK_THROWS_AS(rkhs_norm(g, Vector{1.0, -1.0}), Error);
}

TEST_CASE("conditioning on the training inputs") {
  RngStream rng(9, 0);
  const Matrix x = sphere_inputs(rng, 10, 4);
  const GpPosterior post{make_gram(Kernel::arccos(2), x), random_labels(rng, 10)};
  const GpConditional c = gp_condition(post, x);
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(c.mean[i] == doctest::Approx(post.targets[i]).epsilon(1e-6));
  CHECK(frobenius_norm(c.cov) <= 1e-6);
}

TEST_CASE("posterior mean equals the minimum norm interpolant") {
  RngStream rng(10, 0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = random_int(rng, 2, 25), d = random_int(rng, 2, 12);
    const Kernel k = t % 2 ? Kernel::gaussian(0.5 + rng.uniform()) : Kernel::arccos(random_int(rng, 2, 4));
    const Matrix x = sphere_inputs(rng, m, d), q = sphere_inputs(rng, 15, d);
    const GpPosterior post{make_gram(k, x), random_labels(rng, m)};
    const GpConditional c = gp_condition(post, q);
    const Vector f = min_norm_interpolate(post.gram, post.targets).predict(q);
    for (std::size_t i = 0; i < q.rows(); ++i) CHECK(std::abs(c.mean[i] - f[i]) <= 1e-8);
    CHECK(min_eigenvalue(c.cov) >= -1e-8);
  }
}

TEST_CASE("single point posterior variance") {
  const Kernel k = Kernel::gaussian(1.0);
  const Matrix x = Matrix::from_rows({{0.0, 0.0}});
  const Matrix q = Matrix::from_rows({{0.5, -0.3}});
  const GpPosterior post{make_gram(k, x, 0.0), {1.0}};
  const GpConditional c = gp_condition(post, q);
  const double kq = k(q.row(0), x.row(0));
  CHECK(c.cov(0, 0) == doctest::Approx(1 - kq * kq).epsilon(1e-12));
  CHECK(c.mean[0] == doctest::Approx(kq).epsilon(1e-12));
}

TEST_CASE("posterior variance distance") {
  RngStream rng(11, 0);
  const Matrix x = sphere_inputs(rng, 6, 5);
  const GramBundle g = make_gram(Kernel::gaussian(1.0), x);
  for (std::size_t i = 0; i < 6; ++i) CHECK(posterior_variance_distance(g, x.row(i)) <= 1e-8);

  Matrix table = Matrix::identity(4);
  const GramBundle gi = make_gram(table_kernel(table), index_inputs(3));
  CHECK(posterior_variance_distance(gi, Vector{3.0}) == 1.0);
}

TEST_CASE("posterior variance distance matches a grid search") {
  RngStream rng(12, 0);
  for (int t = 0; t < 10; ++t) {
    const Kernel k = random_kernel(rng);
    const Matrix x = sphere_inputs(rng, 2, 3);
    const Vector q = sphere_point(rng, 3);
    const GramBundle g = make_gram(k, x, 0.0);
    const Vector kx{k(q, x.row(0)), k(q, x.row(1))};
    auto objective = [&](double a0, double a1) {
      return k(q, q) - 2 * (a0 * kx[0] + a1 * kx[1]) + a0 * a0 * g.k(0, 0) +
             2 * a0 * a1 * g.k(0, 1) + a1 * a1 * g.k(1, 1);
    };
    double best = objective(0, 0), c0 = 0, c1 = 0, span = 8.0;
    for (int level = 0; level < 12; ++level) {
      const double b0 = c0, b1 = c1;
      for (int i = -20; i <= 20; ++i)
        for (int j = -20; j <= 20; ++j) {
          const double a0 = b0 + span * i / 20, a1 = b1 + span * j / 20;
          const double v = objective(a0, a1);
          if (v < best) best = v, c0 = a0, c1 = a1;
        }
      span /= 4;
    }
    CHECK(posterior_variance_distance(g, q) == doctest::Approx(best).epsilon(1e-4).scale(1e-4));
  }
}

TEST_CASE("interpolation error bound") {
  RngStream rng(13, 0);
  for (int t = 0; t < 20; ++t) {
    const Kernel k = random_kernel(rng);
    const Matrix x = sphere_inputs(rng, 12, 4);
    const Matrix z = sphere_inputs(rng, 5, 4);
    const Vector c = gaussian_draws(rng, 5);
    const Interpolant gfun{c, k, z};
    const double g_norm = std::sqrt(dot(c, matvec(k.gram(z), c)));
    const GramBundle g = make_gram(k, x);
    const Vector y = gfun.predict(x);
    const Interpolant fstar = min_norm_interpolate(g, y);
    const double f_norm = rkhs_norm(g, fstar.alpha);
    for (std::size_t i = 0; i < 12; ++i)
      CHECK(interpolation_error_bound(g, g_norm, f_norm, x.row(i)) <= 1e-4 * g_norm);
    for (int p = 0; p < 100; ++p) {
      const Vector q = sphere_point(rng, 4);
      CHECK(std::abs(gfun(q) - fstar(q)) <=
            interpolation_error_bound(g, g_norm, f_norm, q) + 1e-7);
    }
  }
  const Matrix x = sphere_inputs(rng, 3, 4);
  const GramBundle g = make_gram(Kernel::gaussian(1.0), x);
  const Vector q = sphere_point(rng, 4);
  CHECK(interpolation_error_bound(g, 2.0, 2.0, q) == 0.0);
  CHECK_THROWS_AS(interpolation_error_bound(g, 1.0, 2.0, q), Error);
}

TEST_CASE("concentration samples collapse onto the mean") {
  RngStream rng(14, 0);
  const Matrix x = sphere_inputs(rng, 8, 5), q = sphere_inputs(rng, 4, 5);
  const GpPosterior post{make_gram(Kernel::arccos(3), x), random_labels(rng, 8), 1e8, 1.0};
  GpPosterior unit = post;
  unit.gamma = 1.0;
  const Vector mean = gp_condition(unit, q).mean;
  const Matrix s = concentration_sample(post, q, 20, rng);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(s(i, j) - mean[j]) <= 1e-6);
}

TEST_CASE("concentration sample spread scales as tau over gamma") {
  RngStream rng(15, 0);
  const Matrix x = sphere_inputs(rng, 10, 6), q = sphere_inputs(rng, 1, 6);
  GpPosterior post{make_gram(Kernel::arccos(2), x), random_labels(rng, 10)};
  std::vector<double> lg, ls;
  for (double gamma : {1.0, 10.0, 100.0}) {
    post.gamma = gamma;
    const Matrix s = concentration_sample(post, q, 10000, rng);
    double mu = 0, sq = 0;
    for (std::size_t i = 0; i < s.rows(); ++i) mu += s(i, 0);
    mu /= s.rows();
    for (std::size_t i = 0; i < s.rows(); ++i) sq += (s(i, 0) - mu) * (s(i, 0) - mu);
    lg.push_back(std::log(gamma));
    ls.push_back(0.5 * std::log(sq / (s.rows() - 1)));
  }
  const double mg = (lg[0] + lg[1] + lg[2]) / 3, ms = (ls[0] + ls[1] + ls[2]) / 3;
  double num = 0, den = 0;
  for (int i = 0; i < 3; ++i) num += (lg[i] - mg) * (ls[i] - ms), den += (lg[i] - mg) * (lg[i] - mg);
  CHECK(num / den == doctest::Approx(-1.0).epsilon(0.05));
}

TEST_CASE("unit concentration sample matches the conditional moments") {
  RngStream rng(16, 0);
  const Matrix x = sphere_inputs(rng, 6, 4), q = sphere_inputs(rng, 3, 4);
  const GpPosterior post{make_gram(Kernel::gaussian(1.2), x), random_labels(rng, 6)};
  const GpConditional c = gp_condition(post, q);
  const std::size_t n = 20000;
  const Matrix s = concentration_sample(post, q, n, rng);
  for (std::size_t j = 0; j < 3; ++j) {
    double mu = 0, sq = 0, fourth = 0;
    for (std::size_t i = 0; i < n; ++i) mu += s(i, j);
    mu /= n;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = s(i, j) - c.mean[j];
      sq += d * d;
      fourth += d * d * d * d;
    }
    sq /= n;
    fourth /= n;
    const double var = c.cov(j, j);
    CHECK(std::abs(mu - c.mean[j]) <= 4 * std::sqrt(var / n));
    CHECK(std::abs(sq - var) <= 4 * std::sqrt((fourth - sq * sq) / n));
  }
}

TEST_CASE("gaussian sampler accepts singular covariances") {
  RngStream rng(17, 0);
  const Matrix cov = Matrix::from_rows({{1, 1}, {1, 1}});
  const GaussianSampler s(cov);
  Vector z(2);
  for (int i = 0; i < 100; ++i) {
    s.draw(rng, z);
    CHECK(z[0] == doctest::Approx(z[1]).epsilon(1e-9));
  }
  CHECK_THROWS_AS(GaussianSampler(Matrix::from_rows({{1, 0}, {0, -1}})), Error);
}

TEST_CASE("empirical NNGP kernel without hidden layers is the cosine kernel") {
  RngStream rng(18, 0);
  const Matrix x = sphere_inputs(rng, 5, 6);
  for (NngpMethod method : {NngpMethod::preactivations, NngpMethod::weights}) {
    const Matrix k = nngp_empirical_kernel({6, 1}, 20000, x, rng, {method});
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        CHECK(std::abs(k(i, j) - dot(x.row(i), x.row(j)) / 6.0) < 0.05);
  }
}

TEST_CASE("empirical NNGP kernel approaches the arccos kernel") {
  RngStream rng(19, 0);
  const Matrix x = sphere_inputs(rng, 6, 8);
  const Matrix exact = Kernel::arccos(3).gram(x);
  const Matrix pre = nngp_empirical_kernel({8, 512, 512, 1}, 10000, x, rng);
  const Matrix wts =
      nngp_empirical_kernel({8, 128, 128, 1}, 3000, x, rng, {NngpMethod::weights});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(std::abs(pre(i, j) - exact(i, j)) < 0.05);
      CHECK(std::abs(wts(i, j) - exact(i, j)) < 0.1);
    }
}

TEST_CASE("empirical NNGP kernel is reproducible across worker counts") {
  RngStream rng(20, 0);
  const Matrix x = sphere_inputs(rng, 4, 5);
  RngStream a(21, 3), b(21, 3);
  const Matrix k1 = nngp_empirical_kernel({5, 32, 1}, 1000, x, a, {NngpMethod::preactivations, 1, 100});
  const Matrix k3 = nngp_empirical_kernel({5, 32, 1}, 1000, x, b, {NngpMethod::preactivations, 3, 100});
  CHECK(k1 == k3);
  CHECK_THROWS_AS(nngp_empirical_kernel({5, 32, 2}, 10, x, a), Error);
}
