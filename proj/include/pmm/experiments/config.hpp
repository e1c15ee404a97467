#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pmm/experiments/datasets.hpp"

namespace pmm::experiments {

/// Sectioned `key = value` text; see docs/config-format.md for the grammar.
/// Every error is ErrorKind::config with a "source:line:" prefix.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> raw(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  /// Comma-separated values; integer lists also accept inclusive ranges a..b.
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  std::vector<double> fallback) const;
  std::vector<std::int64_t> get_ints(const std::string& section, const std::string& key,
                                     std::vector<std::int64_t> fallback) const;
  std::vector<std::string> get_strings(const std::string& section, const std::string& key,
                                       std::vector<std::string> fallback) const;

  /// Sorted `[section]` / `key = value` rendering, stable under reordering
  /// and comments.
  std::string canonical() const;
  /// FNV-1a of canonical().
  std::uint64_t hash() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const noexcept {
    return sections_;
  }

 private:
  [[noreturn]] void fail(const std::string& section, const std::string& key,
                         const std::string& what) const;

  std::map<std::string, std::map<std::string, std::string>> sections_;
  std::map<std::string, int> lines_;  // "section.key" → line
  std::string source_ = "<config>";
};

enum class DataSource { synthetic, idx };
enum class DepthScaling { on, off, both };

struct DataSpec {
  DataSource source = DataSource::synthetic;
  SynthSpec synth;
  std::filesystem::path images;
  std::filesystem::path labels;
  int digit_a = 0;
  int digit_b = 1;
};

/// Typed view of a Config with defaults filled in.
struct ExperimentConfig {
  std::string experiment;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out = "results";
  std::size_t workers = 1;

  DataSpec data;

  std::vector<std::size_t> widths{32, 128, 512};
  std::vector<std::size_t> depths{2, 4, 6};
  std::string nonlinearity = "scaled-relu";
  std::size_t kernel_depth = 3;

  // lr-transfer
  std::vector<int> log2_eta{-12, -11, -10, -9, -8, -7, -6, -5, -4, -3, -2, -1, 0};
  std::size_t steps = 100;
  DepthScaling depth_scaling = DepthScaling::both;

  // margin-sweep
  std::vector<double> margins{1, 10, 100, 1000};
  std::vector<std::size_t> ensembles{1, 9, 81};
  std::size_t trials = 10;
  std::vector<std::string> paths{"nngp", "net"};
  std::size_t net_width = 64;
  std::size_t net_depth = 3;
  std::size_t net_steps = 200;
  std::vector<double> net_margins{0.04, 0.4, 4.0};  // γ for finite nets at init layer norms

  // strategy-compare
  std::vector<std::size_t> m_grid{25, 50, 100, 200};
  std::size_t votes = 501;
  std::string posterior = "spherised";

  // Monte-Carlo budgets
  std::size_t orthant_samples = 1000000;
  std::size_t nngp_width = 4096;
  std::size_t nngp_depth = 3;
  std::size_t nngp_draws = 10000;
  std::size_t nngp_inputs = 8;

  // bounds
  double delta = 0.05;
  std::optional<double> train_error;
  std::optional<double> log_shattering;
  std::optional<double> stability;
  std::optional<double> kl;

  Config raw;
};

/// Validates against the known sections and keys, fills defaults and checks
/// the invariants (nonempty grids, distinct seeds, input files present).
ExperimentConfig make_experiment_config(Config cfg, const std::string& experiment);

}  // namespace pmm::experiments
