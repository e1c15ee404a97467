#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pmm/gp/kernel_gp.hpp"
#include "pmm/numerics/rng.hpp"

namespace pmm::bpm {

enum class PosteriorKind { exact_orthant, spherised };

/// GP classifier posterior on the training outputs: the prior Normal(0, τ²K)
/// truncated to the orthant sign f_X = Y, or its spherised surrogate with
/// independent half-normal coordinates of variance τ²|K|^{1/m}.
struct PosteriorSampler {
  PosteriorKind kind = PosteriorKind::spherised;
  gp::GramBundle gram;
  Vector y;
  double tau = 1.0;
};

PosteriorSampler make_sampler(PosteriorKind kind, gp::GramBundle gram, Vector y,
                              double tau = 1.0);

/// Rows are draws of f_X.
Matrix sample_spherised(const PosteriorSampler& s, std::size_t n, RngStream& rng);

enum class OrthantSampling { automatic, rejection, coordinate_gibbs };

struct OrthantSamplerOptions {
  OrthantSampling method = OrthantSampling::automatic;
  std::size_t burn_in = 1000;   // coordinate-gibbs sweeps discarded
  std::size_t thinning = 10;    // sweeps between kept draws
  std::size_t pilot = 20000;    // draws used to predict the acceptance rate
};

struct OrthantDraws {
  Matrix f;                       // rows are draws of f_X
  OrthantSampling used = OrthantSampling::rejection;
  double acceptance = 0;          // rejection acceptance rate (pilot estimate)
};

/// Draws from Normal(0, τ²K) truncated to sign f_X = Y. Automatic selection
/// uses rejection when m ≤ 12 (and the pilot saw a hit) or the predicted
/// acceptance is at least 1e-4, otherwise coordinate-wise truncated-normal
/// sweeps. Requesting rejection below 1e-4 acceptance raises
/// ErrorKind::method_switch.
OrthantDraws sample_orthant(const PosteriorSampler& s, std::size_t n, RngStream& rng,
                            const OrthantSamplerOptions& opt = {});

/// Draws of f_X from whichever posterior the sampler holds.
Matrix sample_posterior(const PosteriorSampler& s, std::size_t n, RngStream& rng,
                        const OrthantSamplerOptions& opt = {});

/// z ~ Normal(0, 1) conditioned on z ≥ a.
double truncated_normal_above(double a, RngStream& rng);

struct Strategy {
  enum Kind { gibbs, bayes, bpm };
  Kind kind = bayes;
  std::size_t votes = 501;  // ensemble size for bayes (and for the exact-posterior mean in bpm)
};

/// Extends posterior draws of f_X to query points through the prior
/// conditional f(x) | f_X, each query point independently.
class QueryExtension {
 public:
  /// tau scales the conditional noise to match a prior Normal(0, τ²K).
  QueryExtension(const gp::GramBundle& gram, const Matrix& q, double tau = 1.0);
  std::size_t size() const noexcept { return mean_map_.rows(); }
  /// Mean K_qX K⁻¹ f_X.
  Vector mean(std::span<const double> fx) const;
  /// One draw of f_q given f_X (independent noise per query point).
  Vector draw(std::span<const double> fx, RngStream& rng) const;

 private:
  Matrix mean_map_;  // K_qX K⁻¹
  Vector cond_sd_;   // √(K_xx − K_xX K⁻¹ K_Xx)
};

/// ±1 predictions (sign(0) = +1) at the rows of q.
Vector strategy_predict(const PosteriorSampler& s, const Matrix& q, Strategy strategy,
                        RngStream& rng);

struct StrategyErrors {
  double gibbs = 0;
  double bayes = 0;
  double bpm = 0;
  double alpha_gibbs = 0;  // E_x[(E_f sign f(x))²]
  double delta = 0;        // rate at which BPM and Bayes disagree
  std::size_t ensemble = 0;
  double se_gibbs = 0;
  double se_bayes = 0;
  double se_bpm = 0;
  double se_alpha = 0;
  double se_delta = 0;
};

struct EnsembleRun {
  StrategyErrors errors;
  Vector gibbs;  // prediction of the first ensemble member
  Vector bayes;
  Vector bpm;
};

/// Summarises an ensemble from its real-valued outputs (rows = members,
/// columns = test points) and the BPM outputs at the same points.
/// Standard errors treat the members as iid posterior draws. A vote or BPM
/// sign that could flip under resampling contributes its flip variance;
/// bpm_output_se gives the Monte-Carlo error of each BPM output (empty
/// means the BPM outputs are exact).
EnsembleRun ensemble_errors(const Matrix& outputs, std::span<const double> bpm_outputs,
                            std::span<const double> labels,
                            std::span<const double> bpm_output_se = {});

/// Draws `votes` posterior functions on the test set and summarises the
/// Gibbs, Bayes and BPM classifiers. The spherised BPM uses centroid
/// labels ∝ Y; the exact BPM uses the Monte-Carlo mean of the draws.
EnsembleRun strategy_errors(const PosteriorSampler& s, const Matrix& q,
                            std::span<const double> labels, std::size_t votes,
                            RngStream& rng, const OrthantSamplerOptions& opt = {});

struct InequalityCheck {
  std::string name;
  double lhs = 0;
  double rhs = 0;
  double slack = 0;      // 3 standard errors
  bool applicable = true;
  bool conditional = false;  // holds only under the log-concave linear-ensemble hypothesis
  bool pass = true;          // lhs ≤ rhs + slack (true when not applicable)
};

/// ε_Bayes ≤ 2ε_Gibbs; ε_Bayes ≤ 1 − (1 − 2ε_Gibbs)²/α_Gibbs;
/// ε_BPM ≤ e·ε_Gibbs; ε_BPM ≤ ε_Bayes + Δ; ε_BPM ≤ C-bound + Δ.
std::vector<InequalityCheck> inequality_report(const StrategyErrors& e);

struct GaussianDensity {
  Vector mean;
  Matrix cov;
};
struct UniformBox {
  Vector lower;
  Vector upper;
};
using LogConcaveDensity = std::variant<GaussianDensity, UniformBox>;

struct GrunbaumEstimate {
  double fraction = 0;   // P[sign wᵀx = sign μᵀx]
  double std_error = 0;
  bool ambiguous = false;  // μᵀx = 0; excluded from the 1/e check
};

GrunbaumEstimate grunbaum_estimate(const LogConcaveDensity& density,
                                   std::span<const double> x, std::size_t n, RngStream& rng);

/// CSV with header id,label,gibbs,bayes,bpm.
void write_predictions_csv(std::ostream& out, std::span<const double> labels,
                           const EnsembleRun& run);

}  // namespace pmm::bpm
