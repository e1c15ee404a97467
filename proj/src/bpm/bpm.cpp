#include "pmm/bpm/bpm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"

namespace pmm::bpm {
namespace {

constexpr double kMinAcceptance = 1e-4;
constexpr std::size_t kRejectionMaxM = 12;

double sign_of(double v) { return v >= 0.0 ? 1.0 : -1.0; }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Probability that the sign of an estimate with mean `v` and standard error
// `se` comes out positive on a rerun.
double positive_probability(double v, double se) {
  if (se == 0.0) return v >= 0.0 ? 1.0 : 0.0;
  return normal_cdf(v / se);
}

void check_sampler(const PosteriorSampler& s) {
  if (s.y.size() != s.gram.m())
    throw Error(ErrorKind::dimension_mismatch, "label count differs from gram size");
  for (double v : s.y)
    if (v != 1.0 && v != -1.0) throw Error(ErrorKind::invalid_input, "labels must be ±1");
  if (!(s.tau > 0.0)) throw Error(ErrorKind::invalid_input, "tau must be > 0");
}

// One draw f = τ L z evaluated lazily; returns false at the first sign that
// disagrees with y. On success `f` holds the full draw.
bool try_orthant_draw(const Matrix& l, std::span<const double> y, double tau, RngStream& rng,
                      Vector& z, Vector& f) {
  const std::size_t m = y.size();
  for (std::size_t i = 0; i < m; ++i) {
    z[i] = rng.normal();
    const double* li = l.data() + i * m;
    double v = 0.0;
    for (std::size_t j = 0; j <= i; ++j) v += li[j] * z[j];
    f[i] = tau * v;
    if (sign_of(f[i]) != y[i]) return false;
  }
  return true;
}

Matrix rejection_draws(const PosteriorSampler& s, std::size_t n, double acceptance,
                       RngStream& rng) {
  const std::size_t m = s.y.size();
  Matrix out(n, m);
  Vector z(m), f(m);
  const double budget = 100.0 * static_cast<double>(n + 1) / acceptance;
  double attempts = 0;
  for (std::size_t k = 0; k < n;) {
    if (++attempts > budget)
      throw Error(ErrorKind::method_switch, "rejection sampler exceeded its attempt budget");
    if (try_orthant_draw(s.gram.chol.factor, s.y, s.tau, rng, z, f)) {
      std::copy(f.begin(), f.end(), out.row(k).begin());
      ++k;
    }
  }
  return out;
}

Matrix coordinate_gibbs_draws(const PosteriorSampler& s, std::size_t n, RngStream& rng,
                              const OrthantSamplerOptions& opt) {
  const std::size_t m = s.y.size();
  const Matrix prec = chol_inverse(s.gram.chol.factor);
  Vector f(m);
  for (std::size_t i = 0; i < m; ++i) f[i] = s.y[i] * s.tau * std::sqrt(s.gram.k(i, i));
  auto sweep = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      const double pii = prec(i, i);
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j)
        if (j != i) acc += prec(i, j) * f[j];
      const double mu = -acc / pii;
      const double sd = s.tau / std::sqrt(pii);
      // g = y_i f_i is Normal(y_i μ, sd²) truncated to g > 0.
      double g = s.y[i] * mu + sd * truncated_normal_above(-s.y[i] * mu / sd, rng);
      if (!(g > 0.0)) g = std::numeric_limits<double>::denorm_min();
      f[i] = s.y[i] * g;
    }
  };
  for (std::size_t b = 0; b < opt.burn_in; ++b) sweep();
  const std::size_t thin = std::max<std::size_t>(1, opt.thinning);
  Matrix out(n, m);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t t = 0; t < thin; ++t) sweep();
    std::copy(f.begin(), f.end(), out.row(k).begin());
  }
  return out;
}

}  // namespace

PosteriorSampler make_sampler(PosteriorKind kind, gp::GramBundle gram, Vector y, double tau) {
  PosteriorSampler s{kind, std::move(gram), std::move(y), tau};
  check_sampler(s);
  return s;
}

Matrix sample_spherised(const PosteriorSampler& s, std::size_t n, RngStream& rng) {
  check_sampler(s);
  const std::size_t m = s.y.size();
  const double scale = s.tau * std::sqrt(std::exp(s.gram.logdet() / static_cast<double>(m)));
  Matrix out(n, m);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < m; ++i) {
      double g = scale * std::abs(rng.normal());
      if (!(g > 0.0)) g = std::numeric_limits<double>::denorm_min();
      out(k, i) = s.y[i] * g;
    }
  return out;
}

double truncated_normal_above(double a, RngStream& rng) {
  if (!std::isfinite(a)) throw Error(ErrorKind::domain, "truncation point must be finite");
  if (a <= 0.0) {
    for (;;) {
      const double z = rng.normal();
      if (z >= a) return z;
    }
  }
  // Exponential proposal with the optimal rate for the tail beyond a.
  const double lambda = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a - std::log(rng.uniform_open()) / lambda;
    const double d = z - lambda;
    if (rng.uniform() <= std::exp(-0.5 * d * d)) return z;
  }
}

OrthantDraws sample_orthant(const PosteriorSampler& s, std::size_t n, RngStream& rng,
                            const OrthantSamplerOptions& opt) {
  check_sampler(s);
  if (s.kind != PosteriorKind::exact_orthant)
    throw Error(ErrorKind::invalid_input, "sampler is not an exact-orthant posterior");
  const std::size_t m = s.y.size();
  OrthantDraws out;
  OrthantSampling method = opt.method;
  if (method != OrthantSampling::coordinate_gibbs) {
    Vector z(m), f(m);
    std::size_t hits = 0;
    const std::size_t pilot = std::max<std::size_t>(1, opt.pilot);
    for (std::size_t k = 0; k < pilot; ++k)
      hits += try_orthant_draw(s.gram.chol.factor, s.y, s.tau, rng, z, f);
    out.acceptance = static_cast<double>(hits) / static_cast<double>(pilot);
    const bool viable = out.acceptance >= kMinAcceptance || (m <= kRejectionMaxM && hits > 0);
    if (method == OrthantSampling::rejection && !viable)
      throw Error(ErrorKind::method_switch,
                  "predicted acceptance " + std::to_string(out.acceptance) +
                      " too low for rejection; use coordinate-gibbs");
    method = viable ? OrthantSampling::rejection : OrthantSampling::coordinate_gibbs;
  }
  out.used = method;
  out.f = method == OrthantSampling::rejection ? rejection_draws(s, n, out.acceptance, rng)
                                               : coordinate_gibbs_draws(s, n, rng, opt);
  return out;
}

Matrix sample_posterior(const PosteriorSampler& s, std::size_t n, RngStream& rng,
                        const OrthantSamplerOptions& opt) {
  if (s.kind == PosteriorKind::spherised) return sample_spherised(s, n, rng);
  return sample_orthant(s, n, rng, opt).f;
}

QueryExtension::QueryExtension(const gp::GramBundle& gram, const Matrix& q, double tau) {
  if (!gram.kernel)
    throw Error(ErrorKind::invalid_input, "query extension needs a kernel-built gram");
  const Matrix kqx = gram.cross(q);
  mean_map_ = Matrix(q.rows(), gram.m());
  cond_sd_.resize(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const Vector a = chol_solve(gram.chol.factor, kqx.row(i));
    std::copy(a.begin(), a.end(), mean_map_.row(i).begin());
    const double var = (*gram.kernel)(q.row(i), q.row(i)) - dot(a, kqx.row(i));
    cond_sd_[i] = tau * std::sqrt(std::max(var, 0.0));
  }
}

Vector QueryExtension::mean(std::span<const double> fx) const { return matvec(mean_map_, fx); }

Vector QueryExtension::draw(std::span<const double> fx, RngStream& rng) const {
  Vector f = mean(fx);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += cond_sd_[i] * rng.normal();
  return f;
}

Vector strategy_predict(const PosteriorSampler& s, const Matrix& q, Strategy strategy,
                        RngStream& rng) {
  check_sampler(s);
  const QueryExtension ext(s.gram, q, s.tau);
  Vector pred(q.rows());
  switch (strategy.kind) {
    case Strategy::gibbs: {
      const Matrix fx = sample_posterior(s, 1, rng);
      const Vector f = ext.draw(fx.row(0), rng);
      for (std::size_t i = 0; i < f.size(); ++i) pred[i] = sign_of(f[i]);
      break;
    }
    case Strategy::bayes: {
      if (strategy.votes == 0) throw Error(ErrorKind::invalid_input, "need at least one vote");
      const Matrix fx = sample_posterior(s, strategy.votes, rng);
      Vector tally(q.rows(), 0.0);
      for (std::size_t k = 0; k < strategy.votes; ++k) {
        const Vector f = ext.draw(fx.row(k), rng);
        for (std::size_t i = 0; i < f.size(); ++i) tally[i] += sign_of(f[i]);
      }
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = sign_of(tally[i]);
      break;
    }
    case Strategy::bpm: {
      Vector centre = s.y;
      if (s.kind == PosteriorKind::exact_orthant) {
        if (strategy.votes == 0) throw Error(ErrorKind::invalid_input, "need at least one draw");
        const Matrix fx = sample_posterior(s, strategy.votes, rng);
        std::fill(centre.begin(), centre.end(), 0.0);
        for (std::size_t k = 0; k < fx.rows(); ++k) axpy(1.0, fx.row(k), centre);
      }
      const Vector f = ext.mean(centre);
      for (std::size_t i = 0; i < f.size(); ++i) pred[i] = sign_of(f[i]);
      break;
    }
  }
  return pred;
}

EnsembleRun ensemble_errors(const Matrix& outputs, std::span<const double> bpm_outputs,
                            std::span<const double> labels,
                            std::span<const double> bpm_output_se) {
  const std::size_t n = outputs.rows(), t = outputs.cols();
  if (n == 0 || t == 0) throw Error(ErrorKind::invalid_input, "empty ensemble or test set");
  if (labels.size() != t || bpm_outputs.size() != t)
    throw Error(ErrorKind::dimension_mismatch, "labels and BPM outputs must match test set");
  if (!bpm_output_se.empty() && bpm_output_se.size() != t)
    throw Error(ErrorKind::dimension_mismatch, "BPM standard errors must match test set");
  const double nd = static_cast<double>(n), td = static_cast<double>(t);

  EnsembleRun run;
  StrategyErrors& e = run.errors;
  e.ensemble = n;
  run.gibbs.resize(t);
  run.bayes.resize(t);
  run.bpm.resize(t);

  Vector member_err(n, 0.0);
  double var_bayes = 0, var_bpm = 0, var_alpha = 0;
  for (std::size_t x = 0; x < t; ++x) {
    double positive = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const double sk = sign_of(outputs(k, x));
      positive += sk > 0;
      member_err[k] += sk != labels[x];
    }
    run.gibbs[x] = sign_of(outputs(0, x));
    const double v = positive / nd;
    const double sd_v = std::sqrt(v * (1 - v) / nd);
    run.bayes[x] = v >= 0.5 ? 1.0 : -1.0;
    const double qb = positive_probability(v - 0.5, sd_v);
    var_bayes += qb * (1 - qb);
    e.bayes += run.bayes[x] != labels[x];
    e.alpha_gibbs += (2 * v - 1) * (2 * v - 1);
    const double da = 4 * std::abs(2 * v - 1) * sd_v;
    var_alpha += da * da;

    run.bpm[x] = sign_of(bpm_outputs[x]);
    const double qm =
        positive_probability(bpm_outputs[x], bpm_output_se.empty() ? 0.0 : bpm_output_se[x]);
    var_bpm += qm * (1 - qm);
    e.bpm += run.bpm[x] != labels[x];
    e.delta += run.bpm[x] != run.bayes[x];
  }
  e.bayes /= td;
  e.bpm /= td;
  e.delta /= td;
  e.alpha_gibbs /= td;
  e.se_bayes = std::sqrt(var_bayes) / td;
  e.se_bpm = std::sqrt(var_bpm) / td;
  e.se_alpha = std::sqrt(var_alpha) / td;
  e.se_delta = std::sqrt(e.se_bayes * e.se_bayes + e.se_bpm * e.se_bpm);

  for (double& me : member_err) me /= td;
  for (double me : member_err) e.gibbs += me;
  e.gibbs /= nd;
  if (n > 1) {
    double ss = 0;
    for (double me : member_err) ss += (me - e.gibbs) * (me - e.gibbs);
    e.se_gibbs = std::sqrt(ss / (nd - 1) / nd);
  }
  return run;
}

EnsembleRun strategy_errors(const PosteriorSampler& s, const Matrix& q,
                            std::span<const double> labels, std::size_t votes, RngStream& rng,
                            const OrthantSamplerOptions& opt) {
  check_sampler(s);
  if (votes == 0) throw Error(ErrorKind::invalid_input, "need at least one vote");
  const QueryExtension ext(s.gram, q, s.tau);
  const Matrix fx = sample_posterior(s, votes, rng, opt);
  Matrix outputs(votes, q.rows());
  for (std::size_t k = 0; k < votes; ++k) {
    const Vector f = ext.draw(fx.row(k), rng);
    std::copy(f.begin(), f.end(), outputs.row(k).begin());
  }
  if (s.kind == PosteriorKind::spherised) return ensemble_errors(outputs, ext.mean(s.y), labels);

  // Centre-of-mass labels from the draws, with the Monte-Carlo error of the
  // resulting BPM outputs.
  Matrix means(votes, q.rows());
  for (std::size_t k = 0; k < votes; ++k) {
    const Vector mk = ext.mean(fx.row(k));
    std::copy(mk.begin(), mk.end(), means.row(k).begin());
  }
  Vector bpm_out(q.rows(), 0.0), bpm_se(q.rows(), 0.0);
  const double vd = static_cast<double>(votes);
  for (std::size_t k = 0; k < votes; ++k) axpy(1.0 / vd, means.row(k), bpm_out);
  if (votes > 1) {
    for (std::size_t x = 0; x < q.rows(); ++x) {
      double ss = 0;
      for (std::size_t k = 0; k < votes; ++k) {
        const double d = means(k, x) - bpm_out[x];
        ss += d * d;
      }
      bpm_se[x] = std::sqrt(ss / (vd - 1) / vd);
    }
  }
  return ensemble_errors(outputs, bpm_out, labels, bpm_se);
}

std::vector<InequalityCheck> inequality_report(const StrategyErrors& e) {
  auto hyp = [](double a, double b) { return std::sqrt(a * a + b * b); };
  std::vector<InequalityCheck> out;
  auto add = [&](std::string name, double lhs, double rhs, double se, bool applicable,
                 bool conditional) {
    InequalityCheck c{std::move(name), lhs, rhs, 3.0 * se, applicable, conditional, true};
    if (applicable) c.pass = lhs <= rhs + c.slack;
    out.push_back(c);
  };

  add("bayes_le_2gibbs", e.bayes, 2 * e.gibbs, hyp(e.se_bayes, 2 * e.se_gibbs), true, false);

  const bool cb_ok = e.gibbs < 0.5 && e.alpha_gibbs > 0;
  double cb = 1.0, se_cb = 0.0;
  if (cb_ok) {
    const double u = 1 - 2 * e.gibbs;
    cb = 1 - u * u / e.alpha_gibbs;
    se_cb = hyp(4 * u / e.alpha_gibbs * e.se_gibbs,
                u * u / (e.alpha_gibbs * e.alpha_gibbs) * e.se_alpha);
  }
  add("bayes_le_cbound", e.bayes, cb, hyp(e.se_bayes, se_cb), cb_ok, false);
  add("bpm_le_e_gibbs", e.bpm, std::numbers::e * e.gibbs,
      hyp(e.se_bpm, std::numbers::e * e.se_gibbs), true, true);
  add("bpm_le_bayes_plus_delta", e.bpm, e.bayes + e.delta,
      hyp(e.se_bpm, hyp(e.se_bayes, e.se_delta)), true, false);
  add("bpm_le_cbound_plus_delta", e.bpm, cb + e.delta, hyp(e.se_bpm, hyp(se_cb, e.se_delta)),
      cb_ok, false);
  return out;
}

GrunbaumEstimate grunbaum_estimate(const LogConcaveDensity& density,
                                   std::span<const double> x, std::size_t n, RngStream& rng) {
  if (n == 0) throw Error(ErrorKind::invalid_input, "need at least one sample");
  Vector mu;
  std::function<void(std::span<double>)> draw;
  std::optional<gp::GaussianSampler> gauss;
  if (const auto* g = std::get_if<GaussianDensity>(&density)) {
    if (g->cov.rows() != g->mean.size() || !g->cov.is_square())
      throw Error(ErrorKind::dimension_mismatch, "covariance shape differs from mean");
    mu = g->mean;
    gauss.emplace(g->cov);
    draw = [&](std::span<double> w) {
      gauss->draw(rng, w);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += mu[i];
    };
  } else {
    const auto& b = std::get<UniformBox>(density);
    if (b.lower.size() != b.upper.size())
      throw Error(ErrorKind::dimension_mismatch, "box bounds differ in length");
    for (std::size_t i = 0; i < b.lower.size(); ++i)
      if (!(b.lower[i] < b.upper[i]))
        throw Error(ErrorKind::invalid_input, "box must have positive volume");
    mu.resize(b.lower.size());
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = 0.5 * (b.lower[i] + b.upper[i]);
    draw = [&](std::span<double> w) {
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = b.lower[i] + (b.upper[i] - b.lower[i]) * rng.uniform();
    };
  }
  if (x.size() != mu.size())
    throw Error(ErrorKind::dimension_mismatch, "direction length differs from dimension");

  GrunbaumEstimate est;
  const double mx = dot(mu, x);
  est.ambiguous = mx == 0.0;
  const double target = sign_of(mx);
  Vector w(mu.size());
  std::size_t agree = 0;
  for (std::size_t k = 0; k < n; ++k) {
    draw(w);
    agree += sign_of(dot(w, x)) == target;
  }
  const double nd = static_cast<double>(n);
  est.fraction = static_cast<double>(agree) / nd;
  est.std_error = std::sqrt(est.fraction * (1 - est.fraction) / nd);
  return est;
}

void write_predictions_csv(std::ostream& out, std::span<const double> labels,
                           const EnsembleRun& run) {
  if (labels.size() != run.bayes.size())
    throw Error(ErrorKind::dimension_mismatch, "labels differ from prediction count");
  out << "id,label,gibbs,bayes,bpm\r\n";
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << i << ',' << static_cast<int>(labels[i]) << ',' << static_cast<int>(run.gibbs[i])
        << ',' << static_cast<int>(run.bayes[i]) << ',' << static_cast<int>(run.bpm[i])
        << "\r\n";
}

}  // namespace pmm::bpm
