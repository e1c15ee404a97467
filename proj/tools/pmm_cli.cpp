// pmm: experiment runner.
//
//   pmm lr-transfer --config sweep.cfg --out results --workers 4
//
// Exit status: 0 on success, 2 when some grid cells failed, 1 on a
// configuration or input error that stops the whole run.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "pmm/experiments/config.hpp"
#include "pmm/experiments/runners.hpp"
#include "pmm/numerics/error.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartial = 2;

const char* const kExperiments[][2] = {
    {"lr-transfer", "Learning-rate sweep across widths and depths"},
    {"margin-sweep", "Test accuracy against normalised margin and ensemble size"},
    {"strategy-compare", "Gibbs, Bayes and BPM errors with PAC-Bayes bounds"},
    {"nngp-check", "Random-network second moments against the arccos kernel"},
    {"bounds", "Generalisation bound report on the training set"},
    {"selftest", "Quick analytic checks"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Architecture-aware optimisation and PAC-Bayes experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  app.add_option("--config", config_path, "Configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Run a single seed instead of experiment.seeds");
  app.add_option("--out", out, "Output directory");
  app.add_option("--workers", workers, "Worker threads (0 = all cores)");
  for (const auto& [name, help] : kExperiments) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  const std::string experiment = app.get_subcommands().front()->get_name();

  pmm::experiments::ExperimentConfig cfg;
  try {
    auto raw = config_path.empty() ? pmm::experiments::Config{}
                                   : pmm::experiments::Config::load(config_path);
    if (seed) raw.set("experiment", "seeds", std::to_string(*seed));
    if (out) raw.set("experiment", "out", *out);
    if (workers) raw.set("experiment", "workers", std::to_string(*workers));
    cfg = pmm::experiments::make_experiment_config(std::move(raw), experiment);
  } catch (const pmm::Error& e) {
    std::cerr << "pmm: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    const auto summary = pmm::experiments::run(cfg, std::cerr);
    for (const auto& f : summary.failures) std::cerr << "failed cell " << f.cell << ": " << f.error << "\n";
    return summary.failures.empty() ? kOk : kPartial;
  } catch (const pmm::Error& e) {
    std::cerr << "pmm: " << e.what() << "\n";
    return kConfigError;
  }
}
