#include "pmm/experiments/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "pmm/numerics/error.hpp"

namespace pmm::experiments {
namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"experiment", {"name", "seeds", "out", "workers"}},
      {"data",
       {"source", "d0", "m_train", "m_test", "teacher_depth", "teacher_width", "images",
        "labels", "digits"}},
      {"model", {"widths", "depths", "nonlinearity", "kernel_depth"}},
      {"sweep",
       {"log2_eta", "steps", "depth_scaling", "margins", "ensembles", "trials", "paths",
        "net_width", "net_depth", "net_steps", "net_margins", "m", "votes", "posterior"}},
      {"mc", {"orthant_samples", "nngp_width", "nngp_depth", "nngp_draws", "nngp_inputs"}},
      {"bounds", {"delta", "train_error", "log_shattering", "stability", "kl"}},
  };
  return s;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool is_name(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = v.find(',', start);
    out.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

Config Config::parse(std::string_view text, const std::string& source) {
  Config c;
  c.source_ = source;
  std::string section;
  int line_no = 0;
  auto err = [&](const std::string& what) {
    throw Error(ErrorKind::config, source + ":" + std::to_string(line_no) + ": " + what);
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') err("unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!is_name(section)) err("bad section name '" + section + "'");
      if (!schema().contains(section)) err("unknown section [" + section + "]");
      c.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) err("expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (section.empty()) err("key '" + key + "' outside any section");
    if (!is_name(key)) err("bad key '" + key + "'");
    if (!schema().at(section).contains(key)) err("unknown key '" + key + "' in [" + section + "]");
    if (value.empty()) err("empty value for '" + key + "'");
    if (c.sections_[section].contains(key)) err("duplicate key '" + key + "'");
    c.sections_[section][key] = value;
    c.lines_[section + "." + key] = line_no;
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool Config::has(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  return s != sections_.end() && s->second.contains(key);
}

std::optional<std::string> Config::raw(const std::string& section, const std::string& key) const {
  if (!has(section, key)) return std::nullopt;
  return sections_.at(section).at(key);
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
  if (!schema().contains(section) || !schema().at(section).contains(key))
    throw Error(ErrorKind::config, "unknown setting " + section + "." + key);
  sections_[section][key] = std::move(value);
  lines_.erase(section + "." + key);
}

void Config::fail(const std::string& section, const std::string& key,
                  const std::string& what) const {
  const auto it = lines_.find(section + "." + key);
  const std::string where =
      it == lines_.end() ? source_ + ": " : source_ + ":" + std::to_string(it->second) + ": ";
  throw Error(ErrorKind::config, where + section + "." + key + ": " + what);
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  return raw(section, key).value_or(fallback);
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
  const auto r = raw(section, key);
  if (!r) return fallback;
  const auto v = parse_number<double>(*r);
  if (!v) fail(section, key, "expected a number, got '" + *r + "'");
  return *v;
}

std::int64_t Config::get_int(const std::string& section, const std::string& key,
                             std::int64_t fallback) const {
  const auto r = raw(section, key);
  if (!r) return fallback;
  const auto v = parse_number<std::int64_t>(*r);
  if (!v) fail(section, key, "expected an integer, got '" + *r + "'");
  return *v;
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const auto r = raw(section, key);
  if (!r) return fallback;
  if (*r == "true" || *r == "yes" || *r == "on" || *r == "1") return true;
  if (*r == "false" || *r == "no" || *r == "off" || *r == "0") return false;
  fail(section, key, "expected true/false, got '" + *r + "'");
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key,
                                        std::vector<double> fallback) const {
  const auto r = raw(section, key);
  if (!r) return fallback;
  std::vector<double> out;
  for (auto item : split_list(*r)) {
    const auto v = parse_number<double>(item);
    if (!v) fail(section, key, "bad list item '" + std::string(item) + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::int64_t> Config::get_ints(const std::string& section, const std::string& key,
                                           std::vector<std::int64_t> fallback) const {
  const auto r = raw(section, key);
  if (!r) return fallback;
  std::vector<std::int64_t> out;
  for (auto item : split_list(*r)) {
    if (const auto dots = item.find(".."); dots != std::string_view::npos) {
      const auto a = parse_number<std::int64_t>(trim(item.substr(0, dots)));
      const auto b = parse_number<std::int64_t>(trim(item.substr(dots + 2)));
      if (!a || !b || *a > *b) fail(section, key, "bad range '" + std::string(item) + "'");
      for (auto v = *a; v <= *b; ++v) out.push_back(v);
      continue;
    }
    const auto v = parse_number<std::int64_t>(item);
    if (!v) fail(section, key, "bad list item '" + std::string(item) + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& section, const std::string& key,
                                             std::vector<std::string> fallback) const {
  const auto r = raw(section, key);
  if (!r) return fallback;
  std::vector<std::string> out;
  for (auto item : split_list(*r)) {
    if (item.empty()) fail(section, key, "empty list item");
    out.emplace_back(item);
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [sec, kv] : sections_) {
    if (kv.empty()) continue;
    out += "[" + sec + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  }
  return out;
}

std::uint64_t Config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::vector<std::size_t> positive_sizes(const Config& c, const std::string& sec,
                                        const std::string& key,
                                        const std::vector<std::size_t>& fallback) {
  std::vector<std::int64_t> fb(fallback.begin(), fallback.end());
  std::vector<std::size_t> out;
  for (auto v : c.get_ints(sec, key, fb)) {
    if (v <= 0)
      throw Error(ErrorKind::config, sec + "." + key + ": values must be positive");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw Error(ErrorKind::config, sec + "." + key + ": grid is empty");
  return out;
}

std::size_t positive_size(const Config& c, const std::string& sec, const std::string& key,
                          std::size_t fallback) {
  const auto v = c.get_int(sec, key, static_cast<std::int64_t>(fallback));
  if (v <= 0) throw Error(ErrorKind::config, sec + "." + key + ": must be positive");
  return static_cast<std::size_t>(v);
}

std::optional<double> optional_double(const Config& c, const std::string& sec,
                                      const std::string& key) {
  if (!c.has(sec, key)) return std::nullopt;
  return c.get_double(sec, key, 0.0);
}

}  // namespace

ExperimentConfig make_experiment_config(Config cfg, const std::string& experiment) {
  ExperimentConfig e;
  e.experiment = experiment;
  const auto named = cfg.get_string("experiment", "name", experiment);
  if (named != experiment)
    throw Error(ErrorKind::config, "config is for experiment '" + named + "', not '" +
                                       experiment + "'");

  std::vector<std::int64_t> seeds = cfg.get_ints("experiment", "seeds", {1});
  if (seeds.empty()) throw Error(ErrorKind::config, "experiment.seeds: no seeds");
  e.seeds.clear();
  for (auto s : seeds) {
    if (s < 0) throw Error(ErrorKind::config, "experiment.seeds: seeds must be >= 0");
    if (std::find(e.seeds.begin(), e.seeds.end(), static_cast<std::uint64_t>(s)) != e.seeds.end())
      throw Error(ErrorKind::config, "experiment.seeds: duplicate seed " + std::to_string(s));
    e.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  e.out = cfg.get_string("experiment", "out", e.out.string());
  const auto workers = cfg.get_int("experiment", "workers", 1);
  if (workers < 0) throw Error(ErrorKind::config, "experiment.workers: must be >= 0");
  e.workers = static_cast<std::size_t>(workers);

  const auto source = cfg.get_string("data", "source", "synthetic");
  if (source == "synthetic") {
    e.data.source = DataSource::synthetic;
  } else if (source == "idx") {
    e.data.source = DataSource::idx;
    if (!cfg.has("data", "images") || !cfg.has("data", "labels"))
      throw Error(ErrorKind::config, "data.source = idx needs data.images and data.labels");
    e.data.images = cfg.get_string("data", "images", "");
    e.data.labels = cfg.get_string("data", "labels", "");
    for (const auto& p : {e.data.images, e.data.labels})
      if (!std::filesystem::exists(p))
        throw Error(ErrorKind::config, "data file not found: " + p.string());
    const auto digits = cfg.get_ints("data", "digits", {0, 1});
    if (digits.size() != 2 || digits[0] == digits[1] || digits[0] < 0 || digits[0] > 9 ||
        digits[1] < 0 || digits[1] > 9)
      throw Error(ErrorKind::config, "data.digits: expected two distinct digits");
    e.data.digit_a = static_cast<int>(digits[0]);
    e.data.digit_b = static_cast<int>(digits[1]);
  } else {
    throw Error(ErrorKind::config, "data.source: expected synthetic or idx, got '" + source + "'");
  }
  auto& sy = e.data.synth;
  sy.d0 = positive_size(cfg, "data", "d0", sy.d0);
  sy.m_train = positive_size(cfg, "data", "m_train", sy.m_train);
  sy.m_test = positive_size(cfg, "data", "m_test", sy.m_test);
  sy.teacher_depth = positive_size(cfg, "data", "teacher_depth", sy.teacher_depth);
  sy.teacher_width = positive_size(cfg, "data", "teacher_width", sy.teacher_width);

  e.widths = positive_sizes(cfg, "model", "widths", e.widths);
  e.depths = positive_sizes(cfg, "model", "depths", e.depths);
  e.nonlinearity = cfg.get_string("model", "nonlinearity", e.nonlinearity);
  try {
    mlp::parse_nonlinearity(e.nonlinearity);
  } catch (const Error& err) {
    throw Error(ErrorKind::config, std::string("model.nonlinearity: ") + err.what());
  }
  e.kernel_depth = positive_size(cfg, "model", "kernel_depth", e.kernel_depth);

  std::vector<std::int64_t> eta(e.log2_eta.begin(), e.log2_eta.end());
  eta = cfg.get_ints("sweep", "log2_eta", eta);
  if (eta.empty()) throw Error(ErrorKind::config, "sweep.log2_eta: grid is empty");
  e.log2_eta.assign(eta.begin(), eta.end());
  e.steps = positive_size(cfg, "sweep", "steps", e.steps);
  const auto scaling = cfg.get_string("sweep", "depth_scaling", "both");
  if (scaling == "on")
    e.depth_scaling = DepthScaling::on;
  else if (scaling == "off")
    e.depth_scaling = DepthScaling::off;
  else if (scaling == "both")
    e.depth_scaling = DepthScaling::both;
  else
    throw Error(ErrorKind::config, "sweep.depth_scaling: expected on, off or both");

  e.margins = cfg.get_doubles("sweep", "margins", e.margins);
  e.net_margins = cfg.get_doubles("sweep", "net_margins", e.net_margins);
  for (const auto* grid : {&e.margins, &e.net_margins}) {
    if (grid->empty()) throw Error(ErrorKind::config, "sweep: margin grid is empty");
    for (double g : *grid)
      if (!(g > 0)) throw Error(ErrorKind::config, "sweep: margins must be positive");
  }
  e.ensembles = positive_sizes(cfg, "sweep", "ensembles", e.ensembles);
  e.trials = positive_size(cfg, "sweep", "trials", e.trials);
  e.paths = cfg.get_strings("sweep", "paths", e.paths);
  for (const auto& p : e.paths)
    if (p != "nngp" && p != "net")
      throw Error(ErrorKind::config, "sweep.paths: expected nngp and/or net, got '" + p + "'");
  e.net_width = positive_size(cfg, "sweep", "net_width", e.net_width);
  e.net_depth = positive_size(cfg, "sweep", "net_depth", e.net_depth);
  e.net_steps = positive_size(cfg, "sweep", "net_steps", e.net_steps);
  e.m_grid = positive_sizes(cfg, "sweep", "m", e.m_grid);
  e.votes = positive_size(cfg, "sweep", "votes", e.votes);
  e.posterior = cfg.get_string("sweep", "posterior", e.posterior);
  if (e.posterior != "spherised" && e.posterior != "exact")
    throw Error(ErrorKind::config, "sweep.posterior: expected spherised or exact");

  e.orthant_samples = positive_size(cfg, "mc", "orthant_samples", e.orthant_samples);
  e.nngp_width = positive_size(cfg, "mc", "nngp_width", e.nngp_width);
  e.nngp_depth = positive_size(cfg, "mc", "nngp_depth", e.nngp_depth);
  e.nngp_draws = positive_size(cfg, "mc", "nngp_draws", e.nngp_draws);
  e.nngp_inputs = positive_size(cfg, "mc", "nngp_inputs", e.nngp_inputs);

  e.delta = cfg.get_double("bounds", "delta", e.delta);
  if (!(e.delta > 0 && e.delta < 1))
    throw Error(ErrorKind::config, "bounds.delta: must lie in (0, 1)");
  e.train_error = optional_double(cfg, "bounds", "train_error");
  e.log_shattering = optional_double(cfg, "bounds", "log_shattering");
  e.stability = optional_double(cfg, "bounds", "stability");
  e.kl = optional_double(cfg, "bounds", "kl");

  e.raw = std::move(cfg);
  return e;
}

}  // namespace pmm::experiments
