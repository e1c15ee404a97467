#include "pmm/bounds/pac_bayes.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pmm/numerics/error.hpp"
#include "pmm/numerics/parallel.hpp"

namespace pmm::bounds {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_common(const BoundInputs& in) {
  if (in.m == 0) throw Error(ErrorKind::invalid_input, "sample count must be positive");
  if (!(in.delta > 0.0 && in.delta < 1.0))
    throw Error(ErrorKind::invalid_input, "delta must lie in (0, 1)");
}

double need(const std::optional<double>& v, const char* name) {
  if (!v) throw Error(ErrorKind::missing_field, std::string("bound input '") + name + "' missing");
  return *v;
}

double checked_train_error(const BoundInputs& in) {
  const double t = need(in.train_error, "train_error");
  if (!(t >= 0.0 && t <= 1.0)) throw Error(ErrorKind::invalid_input, "train error outside [0, 1]");
  return t;
}

void check_labels(const gp::GramBundle& gram, std::span<const double> y) {
  if (y.size() != gram.m())
    throw Error(ErrorKind::dimension_mismatch, "label count differs from gram size");
  for (double v : y)
    if (v != 1.0 && v != -1.0) throw Error(ErrorKind::invalid_input, "labels must be ±1");
}

bool is_diagonal(const Matrix& k) {
  for (std::size_t i = 0; i < k.rows(); ++i)
    for (std::size_t j = 0; j < k.cols(); ++j)
      if (i != j && k(i, j) != 0.0) return false;
  return true;
}

// Draws f = L z one coordinate at a time and stops at the first sign that
// disagrees with y; most draws leave the orthant within a few coordinates.
std::size_t orthant_hits(const Matrix& l, std::span<const double> y, std::size_t n,
                         RngStream& rng) {
  const std::size_t m = y.size();
  Vector z(m);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < n; ++s) {
    bool inside = true;
    for (std::size_t i = 0; i < m; ++i) {
      z[i] = rng.normal();
      const double* li = l.data() + i * m;
      double f = 0.0;
      for (std::size_t j = 0; j <= i; ++j) f += li[j] * z[j];
      if ((f >= 0.0 ? 1.0 : -1.0) != y[i]) {
        inside = false;
        break;
      }
    }
    hits += inside;
  }
  return hits;
}

BoundEntry entry(std::string name, double value, std::map<std::string, double> inputs,
                 std::string certifies) {
  return {std::move(name), value, std::move(inputs), std::move(certifies), is_vacuous(value)};
}

}  // namespace

double vc_bound(const BoundInputs& in) {
  check_common(in);
  const double t = checked_train_error(in);
  const double logn = need(in.log_shattering, "log_shattering");
  const double m = static_cast<double>(in.m);
  return t + std::sqrt((8.0 / m) * (logn + std::log(4.0 / in.delta)));
}

double stability_bound(const BoundInputs& in) {
  check_common(in);
  const double t = checked_train_error(in);
  const double beta = need(in.stability, "stability");
  if (!(beta >= 0.0)) throw Error(ErrorKind::invalid_input, "stability must be >= 0");
  const double m = static_cast<double>(in.m);
  return t + 2.0 * beta + (4.0 * m * beta + 1.0) * std::sqrt(std::log(1.0 / in.delta) / (2.0 * m));
}

double kl_bernoulli(double p, double q) {
  if (!(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0))
    throw Error(ErrorKind::domain, "Bernoulli parameters must lie in [0, 1]");
  if (p == q) return 0.0;
  // a·log(a/b) as −a·log1p((b − a)/a), with b − a = ±(q − p) taken exactly,
  // keeps kl accurate for q near p.
  auto term = [](double a, double b, double diff) {
    if (a == 0.0) return 0.0;
    if (b == 0.0) return kInf;
    return -a * std::log1p(diff / a);
  };
  return std::max(0.0, term(p, q, q - p) + term(1.0 - p, 1.0 - q, p - q));
}

double pac_bayes_cap(double kl, std::size_t m, double delta) {
  if (m < 2) throw Error(ErrorKind::invalid_input, "PAC-Bayes bound needs m >= 2");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::invalid_input, "delta must lie in (0, 1)");
  if (!(kl >= 0.0)) throw Error(ErrorKind::invalid_input, "KL divergence must be >= 0");
  const double md = static_cast<double>(m);
  return (kl + std::log(2.0 * md / delta)) / (md - 1.0);
}

double kl_inverse_bound(double train_error, double cap) {
  if (!(train_error >= 0.0 && train_error <= 1.0))
    throw Error(ErrorKind::invalid_input, "train error outside [0, 1]");
  if (!(cap >= 0.0)) throw Error(ErrorKind::invalid_input, "cap must be >= 0");
  double lo = train_error, hi = 1.0;
  if (kl_bernoulli(train_error, hi) <= cap) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (kl_bernoulli(train_error, mid) <= cap)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double realisable_bound(double cap) { return -std::expm1(-cap); }

bool is_vacuous(double bound) { return !(bound < 1.0); }

OrthantEstimate orthant_prob(const gp::GramBundle& gram, std::span<const double> y,
                             RngStream& rng, const OrthantOptions& opt) {
  check_labels(gram, y);
  const std::size_t m = gram.m();
  OrthantEstimate est;
  if (opt.exact_diagonal && is_diagonal(gram.k)) {
    est.method = OrthantMethod::exact_diagonal;
    est.log_prob = -static_cast<double>(m) * std::numbers::ln2;
    return est;
  }
  if (opt.samples == 0) throw Error(ErrorKind::invalid_input, "need at least one sample");
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t chunks = (opt.samples + chunk - 1) / chunk;
  std::vector<std::size_t> hits(chunks, 0);
  parallel_for(chunks, opt.workers, [&](std::size_t c) {
    RngStream sub = rng.split(c);
    hits[c] = orthant_hits(gram.chol.factor, y, std::min(chunk, opt.samples - c * chunk), sub);
  });
  est.samples = opt.samples;
  for (std::size_t h : hits) est.hits += h;
  const double n = static_cast<double>(est.samples);
  if (est.hits == 0) {
    est.zero_hits = true;
    est.log_prob = std::log(3.0 / n);
    est.std_error = 3.0 / n;
    est.log_std_error = kInf;
    return est;
  }
  const double p = static_cast<double>(est.hits) / n;
  est.log_prob = std::log(p);
  est.std_error = std::sqrt(p * (1.0 - p) / n);
  est.log_std_error = est.std_error / p;
  return est;
}

double kernel_complexity(const gp::GramBundle& gram, std::span<const double> y) {
  check_labels(gram, y);
  const double m = static_cast<double>(gram.m());
  const Matrix inv = chol_inverse(gram.chol.factor);
  const double quad = dot(y, matvec(inv, y));
  const double root_det = std::exp(gram.logdet() / m);
  return m * (std::numbers::ln2 - 0.5) +
         root_det * ((0.5 - std::numbers::inv_pi) * trace(inv) + std::numbers::inv_pi * quad);
}

KlValues kl_values(const gp::GramBundle& gram, std::span<const double> y,
                   const OrthantEstimate& orthant) {
  KlValues kv;
  kv.kl_gp = -orthant.log_prob;
  kv.kl_sph = kernel_complexity(gram, y);
  const double slack = std::isfinite(orthant.log_std_error) ? 3.0 * orthant.log_std_error : 0.0;
  kv.consistent = kv.kl_gp - slack <= kv.kl_sph * (1.0 + 1e-12);
  return kv;
}

const BoundEntry& BoundReport::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw Error(ErrorKind::missing_field, "no bound named '" + name + "'");
}

std::string BoundReport::to_json(int indent) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& e : entries) {
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [k, v] : e.inputs) inputs[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    j[e.name] = {{"value", e.value},
                 {"inputs", inputs},
                 {"vacuous_flag", e.vacuous},
                 {"certifies", e.certifies}};
  }
  return j.dump(indent);
}

BoundReport classic_bounds(const BoundInputs& in) {
  check_common(in);
  BoundReport r;
  const double m = static_cast<double>(in.m);
  if (in.train_error && in.log_shattering)
    r.entries.push_back(entry("vc", vc_bound(in),
                              {{"m", m}, {"delta", in.delta}, {"train_error", *in.train_error},
                               {"log_shattering", *in.log_shattering}},
                              "every hypothesis in the class"));
  if (in.train_error && in.stability)
    r.entries.push_back(entry("stability", stability_bound(in),
                              {{"m", m}, {"delta", in.delta}, {"train_error", *in.train_error},
                               {"stability", *in.stability}},
                              "the stable algorithm's output"));
  if (in.kl) {
    const double cap = pac_bayes_cap(*in.kl, in.m, in.delta);
    const double t = in.train_error.value_or(0.0);
    r.entries.push_back(entry("pac_bayes", kl_inverse_bound(t, cap),
                              {{"m", m}, {"delta", in.delta}, {"train_error", t}, {"kl", *in.kl}},
                              "the posterior's Gibbs classifier"));
  }
  return r;
}

BoundReport gp_pac_bayes_bounds(const gp::GramBundle& gram, std::span<const double> y,
                                const OrthantEstimate& orthant, double delta) {
  const std::size_t m = gram.m();
  const double md = static_cast<double>(m);
  const double a = kernel_complexity(gram, y);
  const double kl_gp = -orthant.log_prob;
  BoundReport r;
  r.entries.push_back(entry("gp_orthant", realisable_bound(pac_bayes_cap(kl_gp, m, delta)),
                            {{"m", md}, {"delta", delta}, {"log_inv_orthant", kl_gp},
                             {"orthant_log_std_error", orthant.log_std_error}},
                            "GP posterior Gibbs classifier"));
  r.entries.push_back(entry("gp_complexity", realisable_bound(pac_bayes_cap(a, m, delta)),
                            {{"m", md}, {"delta", delta}, {"complexity", a}},
                            "GP posterior Gibbs classifier"));
  r.entries.push_back(entry("sph_complexity", realisable_bound(pac_bayes_cap(a, m, delta)),
                            {{"m", md}, {"delta", delta}, {"complexity", a}},
                            "spherised posterior Gibbs classifier"));
  return r;
}

BoundReport kernel_bpm_bounds(const gp::GramBundle& gram, std::span<const double> y,
                              const OrthantEstimate& orthant, double delta) {
  const BoundReport gibbs = gp_pac_bayes_bounds(gram, y, orthant, delta);
  static const std::pair<const char*, const char*> names[] = {
      {"bpm_orthant", "GP posterior Bayes point machine"},
      {"bpm_complexity", "GP posterior Bayes point machine"},
      {"bpm_sph_complexity", "minimum RKHS norm interpolator of the labels"},
  };
  BoundReport r;
  for (std::size_t i = 0; i < gibbs.entries.size(); ++i) {
    const auto& g = gibbs.entries[i];
    r.entries.push_back(entry(names[i].first, std::numbers::e * g.value, g.inputs, names[i].second));
  }
  return r;
}

}  // namespace pmm::bounds
