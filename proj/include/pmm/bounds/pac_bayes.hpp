#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmm/gp/kernel_gp.hpp"
#include "pmm/numerics/rng.hpp"

namespace pmm::bounds {

struct BoundInputs {
  std::size_t m = 0;
  double delta = 0.05;
  std::optional<double> train_error;
  std::optional<double> log_shattering;  // log N(f, 2m)
  std::optional<double> stability;       // β
  std::optional<double> kl;
  std::optional<double> log_orthant;     // log P_Y
  std::optional<double> complexity;      // A(k, X, Y)
};

/// train + √((8/m)(log N + log(4/δ)))
double vc_bound(const BoundInputs& in);
/// train + 2β + (4mβ + 1)·√(log(1/δ)/(2m))
double stability_bound(const BoundInputs& in);

/// Bernoulli KL divergence kl(p‖q), +∞ when q ∈ {0, 1} and p ≠ q.
double kl_bernoulli(double p, double q);
/// (KL + log(2m/δ)) / (m − 1)
double pac_bayes_cap(double kl, std::size_t m, double delta);
/// Largest q ∈ [train_error, 1] with kl(train_error‖q) ≤ cap (bisection,
/// 200 iterations).
double kl_inverse_bound(double train_error, double cap);
/// 1 − exp(−cap): the inversion at zero train error.
double realisable_bound(double cap);

bool is_vacuous(double bound);

enum class OrthantMethod { monte_carlo, exact_diagonal };

struct OrthantEstimate {
  double log_prob = 0;       // log P̂_Y
  double std_error = 0;      // binomial standard error of P̂_Y
  double log_std_error = 0;  // standard error of log P̂_Y (delta method)
  std::size_t samples = 0;
  std::size_t hits = 0;
  OrthantMethod method = OrthantMethod::monte_carlo;
  /// No sample landed in the orthant; log_prob then holds log(3/n), an
  /// approximate 95% upper confidence limit.
  bool zero_hits = false;
};

struct OrthantOptions {
  std::size_t samples = 1'000'000;
  std::size_t workers = 1;
  std::size_t chunk = 1 << 16;
  bool exact_diagonal = true;  // false forces Monte Carlo on diagonal grams
};

/// Fraction of Normal(0, K_XX) draws with sign f_X = Y (sign(0) = +1).
/// A diagonal K_XX short-circuits to the exact value 2^{−m}.
OrthantEstimate orthant_prob(const gp::GramBundle& gram, std::span<const double> y,
                             RngStream& rng, const OrthantOptions& opt = {});

/// m(log 2 − ½) + |K|^{1/m}·[(½ − 1/π) tr K⁻¹ + (1/π) Yᵀ K⁻¹ Y]
double kernel_complexity(const gp::GramBundle& gram, std::span<const double> y);

struct KlValues {
  double kl_gp = 0;   // log(1/P_Y)
  double kl_sph = 0;  // A(k, X, Y)
  /// kl_gp − 3·SE ≤ kl_sph
  bool consistent = true;
};

KlValues kl_values(const gp::GramBundle& gram, std::span<const double> y,
                   const OrthantEstimate& orthant);

struct BoundEntry {
  std::string name;
  double value = 0;
  std::map<std::string, double> inputs;
  std::string certifies;  // which posterior or predictor the bound is about
  bool vacuous = false;
};

struct BoundReport {
  std::vector<BoundEntry> entries;

  const BoundEntry& at(const std::string& name) const;
  /// Flat object {name: {value, inputs, vacuous_flag, certifies}}.
  std::string to_json(int indent = 2) const;
};

/// VC and stability bounds for whichever inputs are present.
BoundReport classic_bounds(const BoundInputs& in);

/// Gibbs bounds for the GP posterior (orthant and complexity forms) and
/// the spherised posterior.
BoundReport gp_pac_bayes_bounds(const gp::GramBundle& gram, std::span<const double> y,
                                const OrthantEstimate& orthant, double delta);

/// The same three bounds scaled by e, certifying the Bayes point machines
/// sign K_xX K⁻¹ E[f_X] under each posterior.
BoundReport kernel_bpm_bounds(const gp::GramBundle& gram, std::span<const double> y,
                              const OrthantEstimate& orthant, double delta);

}  // namespace pmm::bounds
