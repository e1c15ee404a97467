#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "pmm/bounds/pac_bayes.hpp"
#include "pmm/bpm/bpm.hpp"
#include "pmm/experiments/config.hpp"

namespace pmm::experiments {

/// Training and test data for one seed. Synthetic data comes from the
/// teacher spec with the given sizes; IDX data from the configured digit pair.
Split load_split(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t m_train,
                 std::size_t m_test);

struct LrTransferRow {
  std::size_t width = 0;
  std::size_t depth = 0;
  bool depth_scaling = true;
  int log2_eta = 0;
  std::uint64_t seed = 0;
  double final_loss = 0;
  bool diverged = false;
  std::string error;
};

/// Square-loss training with fixed relative step 2^log2_eta over the
/// width × depth × η grid, with and/or without the 1/L factor. Every η at a
/// given (width, depth, seed) starts from the same initial weights.
std::vector<LrTransferRow> lr_transfer(const ExperimentConfig& cfg);

struct BestEta {
  std::size_t width = 0;
  std::size_t depth = 0;
  bool depth_scaling = true;
  int log2_eta = 0;
  double loss = 0;  // seed-averaged final loss at the best η
};

/// Grid point with the lowest seed-averaged final loss (diverged or failed
/// cells count as +inf; ties go to the smaller η).
std::vector<BestEta> best_learning_rates(const std::vector<LrTransferRow>& rows);

struct MarginRow {
  std::string path;  // "nngp" or "net"
  std::size_t ensemble = 0;
  double margin = 0;
  std::uint64_t seed = 0;
  double accuracy = 0;   // mean test accuracy over trials
  double std_error = 0;  // across trials
  std::string error;
};

/// Test accuracy of averages of `ensemble` posterior samples (NNGP path,
/// normalised margin γ/τ) or independently trained margin-projected nets
/// (net path, margin γ at the initial layer norms).
std::vector<MarginRow> margin_sweep(const ExperimentConfig& cfg);

struct StrategyRow {
  std::uint64_t seed = 0;
  std::size_t m = 0;
  std::string strategy;
  double test_error = 0;
  double std_error = 0;
  std::string bound;  // empty when the strategy has no bound
  double bound_value = 0;
  bool vacuous = false;
  std::string error;
};

struct StrategyCompare {
  std::vector<StrategyRow> rows;
  struct Check {
    std::uint64_t seed = 0;
    std::size_t m = 0;
    bpm::InequalityCheck check;
  };
  std::vector<Check> inequalities;
};

/// Gibbs, Bayes and BPM test errors of the kernel classifier posterior for
/// each training size, with the matching PAC-Bayes bounds.
StrategyCompare strategy_compare(const ExperimentConfig& cfg);

struct NngpCheck {
  Matrix x;
  Matrix empirical;
  Matrix analytic;
  double max_offdiag_error = 0;
  double max_diag_error = 0;  // against E[f²] = 1
};

/// Empirical second moments of random scaled-relu nets against the
/// compositional arccos kernel on points of the radius-√d_0 sphere.
NngpCheck nngp_check(const ExperimentConfig& cfg, std::uint64_t seed);

/// Classic bounds from the caller-supplied inputs plus the GP and kernel
/// BPM bounds on the training split.
bounds::BoundReport bounds_report(const ExperimentConfig& cfg, std::uint64_t seed);

struct SelftestCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Quick analytic checks of the installed library.
std::vector<SelftestCheck> selftest();

struct CellFailure {
  std::string cell;
  std::string error;
};

struct RunSummary {
  std::vector<std::filesystem::path> files;
  std::size_t cells = 0;
  std::vector<CellFailure> failures;
};

/// Runs the named experiment, writes its CSV/JSON files and the run manifest
/// into cfg.out and reports failed grid cells.
RunSummary run(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace pmm::experiments
