#include "pmm/experiments/runners.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

#include "pmm/dln/deep_linear.hpp"
#include "pmm/experiments/output.hpp"
#include "pmm/gp/kernel_gp.hpp"
#include "pmm/numerics/error.hpp"
#include "pmm/numerics/linalg.hpp"
#include "pmm/numerics/parallel.hpp"

namespace pmm::experiments {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr const char* kVersion = "1.0.0";

// Stream tags; cell streams are derived from (tag, grid coordinates).
enum : std::uint64_t { kData = 1, kInit, kTrain, kSample, kOrthant, kNngp, kBounds };

RngStream cell_stream(std::uint64_t seed, std::uint64_t tag,
                      std::initializer_list<std::uint64_t> coords) {
  return RngStream(seed, derive_stream_id(tag, std::span(coords.begin(), coords.size())));
}

mlp::TrainSample head(const mlp::TrainSample& s, std::size_t m) {
  if (m > s.size()) throw Error(ErrorKind::insufficient_data, "training split too small");
  mlp::TrainSample out{Matrix(m, s.x.cols()), Matrix(m, 1)};
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(s.x.row(i).begin(), s.x.row(i).end(), out.x.row(i).begin());
    out.y(i, 0) = s.y(i, 0);
  }
  return out;
}

Vector label_vector(const Matrix& y) {
  Vector v(y.rows());
  for (std::size_t i = 0; i < y.rows(); ++i) v[i] = y(i, 0);
  return v;
}

double accuracy_of(std::span<const double> f, const Matrix& y) {
  double hits = 0;
  for (std::size_t i = 0; i < f.size(); ++i) hits += (f[i] >= 0 ? 1.0 : -1.0) == y(i, 0);
  return hits / static_cast<double>(f.size());
}

std::vector<std::size_t> layer_widths(std::size_t d0, std::size_t width, std::size_t depth) {
  std::vector<std::size_t> w{d0};
  for (std::size_t l = 1; l < depth; ++l) w.push_back(width);
  w.push_back(1);
  return w;
}

std::string cell_name(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += (s.empty() ? "" : " ") + k + "=" + v;
  return s;
}

std::string yes_no(bool b) { return b ? "true" : "false"; }

}  // namespace

Split load_split(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t m_train,
                 std::size_t m_test) {
  RngStream rng = cell_stream(seed, kData, {});
  if (cfg.data.source == DataSource::synthetic) {
    SynthSpec spec = cfg.data.synth;
    spec.m_train = m_train;
    spec.m_test = m_test;
    return synth_teacher_data(spec, rng).split;
  }
  const IdxDataset ds = load_idx(cfg.data.images, cfg.data.labels);
  return preprocess(ds, cfg.data.digit_a, cfg.data.digit_b, m_train, m_test, rng);
}

std::vector<LrTransferRow> lr_transfer(const ExperimentConfig& cfg) {
  const auto phi = mlp::parse_nonlinearity(cfg.nonlinearity);
  std::vector<bool> scalings;
  if (cfg.depth_scaling != DepthScaling::off) scalings.push_back(true);
  if (cfg.depth_scaling != DepthScaling::on) scalings.push_back(false);

  std::vector<LrTransferRow> rows;
  for (auto seed : cfg.seeds)
    for (auto width : cfg.widths)
      for (auto depth : cfg.depths)
        for (bool scaling : scalings)
          for (int e : cfg.log2_eta) rows.push_back({width, depth, scaling, e, seed, 0, false, {}});

  std::map<std::uint64_t, mlp::TrainSample> data;
  for (auto seed : cfg.seeds)
    data.emplace(seed, load_split(cfg, seed, cfg.data.synth.m_train, 0).train);

  parallel_for(rows.size(), cfg.workers, [&](std::size_t i) {
    auto& r = rows[i];
    try {
      RngStream init = cell_stream(r.seed, kInit, {r.width, r.depth});
      const auto& train = data.at(r.seed);
      mlp::MlpNet net = mlp::init_rms_one(layer_widths(train.x.cols(), r.width, r.depth), init, phi);
      mlp::TrainOptions opt;
      opt.steps = cfg.steps;
      opt.update.fixed_eta = std::ldexp(1.0, r.log2_eta);
      opt.update.depth_scaling = r.depth_scaling;
      const auto tr = mlp::train_architecture_aware(net, train, opt);
      r.diverged = tr.diverged;
      r.final_loss = tr.diverged ? kInf : tr.points.back().loss;
    } catch (const Error& e) {
      r.error = e.what();
      r.final_loss = kInf;
    }
  });
  return rows;
}

std::vector<BestEta> best_learning_rates(const std::vector<LrTransferRow>& rows) {
  struct Acc {
    double sum = 0;
    std::size_t n = 0;
  };
  std::map<std::tuple<std::size_t, std::size_t, bool>, std::map<int, Acc>> grid;
  for (const auto& r : rows) {
    auto& a = grid[{r.width, r.depth, r.depth_scaling}][r.log2_eta];
    a.sum += r.error.empty() && std::isfinite(r.final_loss) ? r.final_loss : kInf;
    ++a.n;
  }
  std::vector<BestEta> out;
  for (const auto& [key, etas] : grid) {
    BestEta b{std::get<0>(key), std::get<1>(key), std::get<2>(key), 0, kInf};
    bool first = true;
    for (const auto& [e, a] : etas) {
      const double mean = a.sum / static_cast<double>(a.n);
      if (first || mean < b.loss) {
        b.log2_eta = e;
        b.loss = mean;
        first = false;
      }
    }
    out.push_back(b);
  }
  return out;
}

std::vector<MarginRow> margin_sweep(const ExperimentConfig& cfg) {
  const std::size_t max_ens = *std::max_element(cfg.ensembles.begin(), cfg.ensembles.end());
  const bool nngp = std::find(cfg.paths.begin(), cfg.paths.end(), "nngp") != cfg.paths.end();
  const bool net = std::find(cfg.paths.begin(), cfg.paths.end(), "net") != cfg.paths.end();
  const auto phi = mlp::parse_nonlinearity(cfg.nonlinearity);
  std::vector<MarginRow> out;

  for (auto seed : cfg.seeds) {
    const Split split = load_split(cfg, seed, cfg.data.synth.m_train, cfg.data.synth.m_test);
    const std::size_t t = split.test.size();

    // outputs[cell] holds members × test outputs of f/γ for one (margin, trial).
    auto summarise = [&](const std::string& path, const std::vector<double>& margins,
                         const std::vector<Matrix>& outputs,
                         const std::vector<std::string>& errors) {
      for (std::size_t g = 0; g < margins.size(); ++g)
        for (auto n : cfg.ensembles) {
          MarginRow row{path, n, margins[g], seed, 0, 0, {}};
          std::vector<double> acc;
          for (std::size_t tr = 0; tr < cfg.trials; ++tr) {
            const std::size_t c = g * cfg.trials + tr;
            if (!errors[c].empty()) {
              row.error = errors[c];
              continue;
            }
            Vector avg(t, 0.0);
            for (std::size_t k = 0; k < n; ++k) axpy(1.0 / static_cast<double>(n), outputs[c].row(k), avg);
            acc.push_back(accuracy_of(avg, split.test.y));
          }
          if (!acc.empty()) {
            double s = 0, ss = 0;
            for (double a : acc) s += a;
            row.accuracy = s / static_cast<double>(acc.size());
            for (double a : acc) ss += (a - row.accuracy) * (a - row.accuracy);
            if (acc.size() > 1)
              row.std_error = std::sqrt(ss / static_cast<double>(acc.size() - 1) /
                                        static_cast<double>(acc.size()));
          } else {
            row.accuracy = std::numeric_limits<double>::quiet_NaN();
          }
          out.push_back(row);
        }
    };

    if (nngp) {
      const auto gram = gp::make_gram(gp::Kernel::arccos(cfg.kernel_depth), split.train.x);
      const Vector y = label_vector(split.train.y);
      const std::size_t cells = cfg.margins.size() * cfg.trials;
      std::vector<Matrix> outputs(cells);
      std::vector<std::string> errors(cells);
      parallel_for(cells, cfg.workers, [&](std::size_t c) {
        const std::size_t g = c / cfg.trials, tr = c % cfg.trials;
        try {
          RngStream rng = cell_stream(seed, kSample, {0, g, tr});
          const gp::GpPosterior post{gram, y, cfg.margins[g], 1.0};
          outputs[c] = gp::concentration_sample(post, split.test.x, max_ens, rng);
        } catch (const Error& e) {
          errors[c] = e.what();
        }
      });
      summarise("nngp", cfg.margins, outputs, errors);
    }

    if (net) {
      const auto widths = layer_widths(split.train.x.cols(), cfg.net_width, cfg.net_depth);
      const std::size_t runs = cfg.net_margins.size() * cfg.trials * max_ens;
      std::vector<Vector> member(runs);
      std::vector<std::string> member_err(runs);
      parallel_for(runs, cfg.workers, [&](std::size_t i) {
        const std::size_t k = i % max_ens, tr = (i / max_ens) % cfg.trials,
                          g = i / (max_ens * cfg.trials);
        try {
          RngStream init = cell_stream(seed, kInit, {1, tr, k});
          mlp::MlpNet model = mlp::init_rms_one(widths, init, phi);
          Vector radii(model.depth());
          for (std::size_t l = 0; l < radii.size(); ++l)
            radii[l] = frobenius_norm(model.weights()[l]);
          mlp::ProjectedOptions opt;
          opt.steps = cfg.net_steps;
          const double gamma = cfg.net_margins[g];
          mlp::train_margin_projected(model, split.train, gamma, radii, opt);
          const Matrix f = mlp::mlp_forward_batch(model, split.test.x);
          member[i].resize(t);
          for (std::size_t j = 0; j < t; ++j) member[i][j] = f(j, 0) / gamma;
        } catch (const Error& e) {
          member_err[i] = e.what();
        }
      });
      const std::size_t cells = cfg.net_margins.size() * cfg.trials;
      std::vector<Matrix> outputs(cells, Matrix(max_ens, t));
      std::vector<std::string> errors(cells);
      for (std::size_t i = 0; i < runs; ++i) {
        const std::size_t c = i / max_ens, k = i % max_ens;
        if (!member_err[i].empty()) {
          errors[c] = member_err[i];
          continue;
        }
        std::copy(member[i].begin(), member[i].end(), outputs[c].row(k).begin());
      }
      summarise("net", cfg.net_margins, outputs, errors);
    }
  }
  return out;
}

StrategyCompare strategy_compare(const ExperimentConfig& cfg) {
  const std::size_t max_m = *std::max_element(cfg.m_grid.begin(), cfg.m_grid.end());
  const auto kind =
      cfg.posterior == "exact" ? bpm::PosteriorKind::exact_orthant : bpm::PosteriorKind::spherised;
  const bool sph = kind == bpm::PosteriorKind::spherised;

  struct Cell {
    std::uint64_t seed;
    std::size_t m;
    std::optional<bpm::EnsembleRun> run;
    bounds::BoundReport gibbs, bpm;
    std::string error;
  };
  std::vector<Cell> cells;
  std::map<std::uint64_t, Split> data;
  for (auto seed : cfg.seeds) {
    data.emplace(seed, load_split(cfg, seed, max_m, cfg.data.synth.m_test));
    for (auto m : cfg.m_grid) cells.push_back({seed, m, std::nullopt, {}, {}, {}});
  }

  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    auto& c = cells[i];
    try {
      const Split& split = data.at(c.seed);
      const auto train = head(split.train, c.m);
      const Vector y = label_vector(train.y);
      const auto gram = gp::make_gram(gp::Kernel::arccos(cfg.kernel_depth), train.x);
      const auto sampler = bpm::make_sampler(kind, gram, y);
      RngStream rng = cell_stream(c.seed, kSample, {2, c.m});
      c.run = bpm::strategy_errors(sampler, split.test.x, label_vector(split.test.y), cfg.votes,
                                   rng);
      RngStream orng = cell_stream(c.seed, kOrthant, {c.m});
      bounds::OrthantOptions oopt;
      oopt.samples = cfg.orthant_samples;
      const auto orthant = bounds::orthant_prob(gram, y, orng, oopt);
      c.gibbs = bounds::gp_pac_bayes_bounds(gram, y, orthant, cfg.delta);
      c.bpm = bounds::kernel_bpm_bounds(gram, y, orthant, cfg.delta);
    } catch (const Error& e) {
      c.error = e.what();
    }
  });

  StrategyCompare out;
  for (const auto& c : cells) {
    if (!c.run) {
      for (const char* s : {"gibbs", "bayes", "bpm"})
        out.rows.push_back({c.seed, c.m, s, kInf, 0, {}, 0, false, c.error});
      continue;
    }
    const auto& e = c.run->errors;
    const auto& gb = c.gibbs.at(sph ? "sph_complexity" : "gp_orthant");
    const auto& bb = c.bpm.at(sph ? "bpm_sph_complexity" : "bpm_orthant");
    out.rows.push_back({c.seed, c.m, "gibbs", e.gibbs, e.se_gibbs, gb.name, gb.value, gb.vacuous, {}});
    out.rows.push_back({c.seed, c.m, "bayes", e.bayes, e.se_bayes, {}, 0, false, {}});
    out.rows.push_back({c.seed, c.m, "bpm", e.bpm, e.se_bpm, bb.name, bb.value, bb.vacuous, {}});
    for (const auto& chk : bpm::inequality_report(e)) out.inequalities.push_back({c.seed, c.m, chk});
  }
  return out;
}

NngpCheck nngp_check(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::size_t d0 = cfg.data.synth.d0;
  RngStream xr = cell_stream(seed, kData, {1});
  NngpCheck out;
  out.x = Matrix(cfg.nngp_inputs, d0);
  for (std::size_t i = 0; i < cfg.nngp_inputs; ++i) {
    auto r = out.x.row(i);
    xr.fill_normal(r);
    const double s = std::sqrt(static_cast<double>(d0)) / norm2(r);
    for (double& v : r) v *= s;
  }
  RngStream rng = cell_stream(seed, kNngp, {});
  gp::NngpOptions opt;
  opt.workers = cfg.workers;
  out.empirical = gp::nngp_empirical_kernel(layer_widths(d0, cfg.nngp_width, cfg.nngp_depth),
                                            cfg.nngp_draws, out.x, rng, opt);
  out.analytic = gp::Kernel::arccos(cfg.nngp_depth).gram(out.x);
  for (std::size_t i = 0; i < out.x.rows(); ++i)
    for (std::size_t j = 0; j < out.x.rows(); ++j) {
      const double d = std::abs(out.empirical(i, j) - out.analytic(i, j));
      if (i == j)
        out.max_diag_error = std::max(out.max_diag_error, std::abs(out.empirical(i, i) - 1.0));
      else
        out.max_offdiag_error = std::max(out.max_offdiag_error, d);
    }
  return out;
}

bounds::BoundReport bounds_report(const ExperimentConfig& cfg, std::uint64_t seed) {
  const Split split = load_split(cfg, seed, cfg.data.synth.m_train, 0);
  const Vector y = label_vector(split.train.y);
  const auto gram = gp::make_gram(gp::Kernel::arccos(cfg.kernel_depth), split.train.x);
  bounds::BoundInputs in;
  in.m = split.train.size();
  in.delta = cfg.delta;
  in.train_error = cfg.train_error;
  in.log_shattering = cfg.log_shattering;
  in.stability = cfg.stability;
  in.kl = cfg.kl;
  bounds::BoundReport report = bounds::classic_bounds(in);
  RngStream rng = cell_stream(seed, kBounds, {});
  bounds::OrthantOptions opt;
  opt.samples = cfg.orthant_samples;
  opt.workers = cfg.workers;
  const auto orthant = bounds::orthant_prob(gram, y, rng, opt);
  for (auto& e : bounds::gp_pac_bayes_bounds(gram, y, orthant, cfg.delta).entries)
    report.entries.push_back(std::move(e));
  for (auto& e : bounds::kernel_bpm_bounds(gram, y, orthant, cfg.delta).entries)
    report.entries.push_back(std::move(e));
  return report;
}

std::vector<SelftestCheck> selftest() {
  std::vector<SelftestCheck> out;
  auto check = [&](std::string name, auto&& fn) {
    SelftestCheck c{std::move(name), false, {}};
    try {
      c.pass = fn(c.detail);
    } catch (const std::exception& e) {
      c.detail = e.what();
    }
    out.push_back(std::move(c));
  };
  RngStream rng(2024, 0);

  check("kl inversion at zero training error", [](std::string& d) {
    const double cap = 0.3, got = bounds::kl_inverse_bound(0.0, cap), want = -std::expm1(-cap);
    d = format_number(got) + " vs " + format_number(want);
    return std::abs(got - want) <= 1e-9;
  });
  check("identity gram orthant and complexity", [&](std::string& d) {
    const auto gram = gp::gram_from_matrix(Matrix::identity(4));
    const Vector y{1, -1, 1, -1};
    const auto est = bounds::orthant_prob(gram, y, rng);
    const double a = bounds::kernel_complexity(gram, y), want = 4 * std::numbers::ln2;
    d = "log(1/P) " + format_number(-est.log_prob) + ", A " + format_number(a);
    return std::abs(-est.log_prob - want) <= 1e-12 && std::abs(a - want) <= 1e-12;
  });
  check("arccos kernel has unit diagonal", [&](std::string& d) {
    Vector x(10);
    rng.fill_normal(x);
    const double s = std::sqrt(10.0) / norm2(x);
    for (double& v : x) v *= s;
    const double k = gp::arccos_kernel(x, x, 4);
    d = format_number(k);
    return std::abs(k - 1.0) <= 1e-12;
  });
  check("posterior mean equals interpolant", [&](std::string& d) {
    Matrix x(12, 5);
    for (std::size_t i = 0; i < 12; ++i) {
      auto r = x.row(i);
      rng.fill_normal(r);
    }
    const auto gram = gp::make_gram(gp::Kernel::gaussian(1.5), x);
    Vector y(12);
    rng.fill_normal(y);
    Matrix q(6, 5);
    for (std::size_t i = 0; i < 6; ++i) rng.fill_normal(q.row(i));
    const auto cond = gp::gp_condition({gram, y}, q);
    const Vector f = gp::min_norm_interpolate(gram, y).predict(q);
    double worst = 0;
    for (std::size_t i = 0; i < f.size(); ++i) worst = std::max(worst, std::abs(f[i] - cond.mean[i]));
    d = "max difference " + format_number(worst);
    return worst <= 1e-8;
  });
  check("deep linear perturbation bounds", [&](std::string& d) {
    WeightTuple w, dw;
    const std::vector<std::size_t> widths{6, 8, 8, 1};
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      Matrix a(widths[l + 1], widths[l]), b(widths[l + 1], widths[l]);
      rng.fill_normal(std::span(a.data(), a.size()));
      rng.fill_normal(std::span(b.data(), b.size()));
      b *= 0.05;
      w.push_back(a);
      dw.push_back(b);
    }
    Matrix x(5, 6);
    for (std::size_t i = 0; i < 5; ++i) rng.fill_normal(x.row(i));
    x = project_to_sphere(x);
    const auto r = dln::perturbation_bounds(dln::DeepLinearNet(w), dw, x);
    d = format_number(r.measured_change) + " <= " + format_number(r.first_order);
    return r.measured_change <= r.first_order * (1 + 1e-9) &&
           r.measured_linearisation_error <= r.second_order * (1 + 1e-9);
  });
  check("idx round trip", [](std::string& d) {
    IdxDataset ds{2, 2, 2, {0, 1, 2, 3, 252, 253, 254, 255}, {7, 1}};
    const auto back = parse_idx_images(encode_idx_images(ds));
    const auto labels = parse_idx_labels(encode_idx_labels(ds));
    d = std::to_string(back.images.size()) + " pixel bytes";
    return back.images == ds.images && labels == ds.labels && back.rows == 2 && back.cols == 2;
  });
  return out;
}

RunSummary run(const ExperimentConfig& cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + cfg.out.string() + ": " + ec.message());

  RunSummary summary;
  nlohmann::json results = nlohmann::json::object();
  const std::string& name = cfg.experiment;
  auto save_csv = [&](const CsvTable& table, const std::string& file) {
    const fs::path p = cfg.out / file;
    table.save(p);
    summary.files.push_back(p);
  };
  auto fail = [&](std::string cell, const std::string& error) {
    if (!error.empty()) summary.failures.push_back({std::move(cell), error});
  };

  if (name == "lr-transfer") {
    const auto rows = lr_transfer(cfg);
    CsvTable t({"width", "depth", "depth_scaling", "log2_eta", "eta", "eta_over_depth", "seed",
                "final_train_loss", "diverged", "error"});
    for (const auto& r : rows) {
      const double eta = std::ldexp(1.0, r.log2_eta);
      t.add({std::to_string(r.width), std::to_string(r.depth), yes_no(r.depth_scaling),
             std::to_string(r.log2_eta), format_number(eta),
             format_number(eta / static_cast<double>(r.depth)), std::to_string(r.seed),
             format_number(r.final_loss), yes_no(r.diverged), r.error});
      fail(cell_name({{"width", std::to_string(r.width)},
                      {"depth", std::to_string(r.depth)},
                      {"depth_scaling", yes_no(r.depth_scaling)},
                      {"log2_eta", std::to_string(r.log2_eta)},
                      {"seed", std::to_string(r.seed)}}),
           r.error);
    }
    summary.cells = rows.size();
    save_csv(t, "lr_transfer.csv");
    CsvTable b({"width", "depth", "depth_scaling", "best_log2_eta", "mean_final_train_loss"});
    for (const auto& be : best_learning_rates(rows))
      b.add({std::to_string(be.width), std::to_string(be.depth), yes_no(be.depth_scaling),
             std::to_string(be.log2_eta), format_number(be.loss)});
    save_csv(b, "lr_transfer_best.csv");
  } else if (name == "margin-sweep") {
    const auto rows = margin_sweep(cfg);
    CsvTable t({"path", "seed", "ensemble_size", "normalised_margin", "test_accuracy",
                "std_error", "trials", "error"});
    for (const auto& r : rows) {
      t.add({r.path, std::to_string(r.seed), std::to_string(r.ensemble), format_number(r.margin),
             format_number(r.accuracy), format_number(r.std_error), std::to_string(cfg.trials),
             r.error});
      fail(cell_name({{"path", r.path},
                      {"ensemble", std::to_string(r.ensemble)},
                      {"margin", format_number(r.margin)},
                      {"seed", std::to_string(r.seed)}}),
           r.error);
    }
    summary.cells = rows.size();
    save_csv(t, "margin_sweep.csv");
  } else if (name == "strategy-compare") {
    const auto res = strategy_compare(cfg);
    CsvTable t({"seed", "m", "strategy", "test_error", "std_error", "bound", "bound_value",
                "vacuous", "error"});
    for (const auto& r : res.rows) {
      t.add({std::to_string(r.seed), std::to_string(r.m), r.strategy, format_number(r.test_error),
             format_number(r.std_error), r.bound, r.bound.empty() ? "" : format_number(r.bound_value),
             r.bound.empty() ? "" : yes_no(r.vacuous), r.error});
      if (r.strategy == "gibbs")
        fail(cell_name({{"m", std::to_string(r.m)}, {"seed", std::to_string(r.seed)}}), r.error);
    }
    summary.cells = res.rows.size() / 3;
    save_csv(t, "strategy_compare.csv");
    CsvTable q({"seed", "m", "inequality", "lhs", "rhs", "slack", "applicable", "conditional",
                "pass"});
    for (const auto& c : res.inequalities)
      q.add({std::to_string(c.seed), std::to_string(c.m), c.check.name, format_number(c.check.lhs),
             format_number(c.check.rhs), format_number(c.check.slack), yes_no(c.check.applicable),
             yes_no(c.check.conditional), yes_no(c.check.pass)});
    save_csv(q, "strategy_inequalities.csv");
  } else if (name == "nngp-check") {
    CsvTable t({"seed", "i", "j", "empirical", "arccos_kernel", "abs_error"});
    for (auto seed : cfg.seeds) {
      ++summary.cells;
      try {
        const auto r = nngp_check(cfg, seed);
        for (std::size_t i = 0; i < r.x.rows(); ++i)
          for (std::size_t j = i; j < r.x.rows(); ++j)
            t.add({std::to_string(seed), std::to_string(i), std::to_string(j),
                   format_number(r.empirical(i, j)), format_number(r.analytic(i, j)),
                   format_number(std::abs(r.empirical(i, j) - r.analytic(i, j)))});
        results[std::to_string(seed)] = {{"max_offdiag_error", r.max_offdiag_error},
                                         {"max_diag_error", r.max_diag_error}};
      } catch (const Error& e) {
        fail(cell_name({{"seed", std::to_string(seed)}}), e.what());
      }
    }
    save_csv(t, "nngp_check.csv");
  } else if (name == "bounds") {
    for (auto seed : cfg.seeds) {
      ++summary.cells;
      try {
        const auto report = bounds_report(cfg, seed);
        const fs::path p = cfg.out / ("bounds_seed" + std::to_string(seed) + ".json");
        write_text(p, report.to_json(2) + "\n");
        summary.files.push_back(p);
      } catch (const Error& e) {
        fail(cell_name({{"seed", std::to_string(seed)}}), e.what());
      }
    }
  } else if (name == "selftest") {
    CsvTable t({"check", "pass", "detail"});
    for (const auto& c : selftest()) {
      ++summary.cells;
      t.add({c.name, yes_no(c.pass), c.detail});
      log << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
      if (!c.pass) fail(c.name, c.detail.empty() ? "check failed" : c.detail);
    }
    save_csv(t, "selftest.csv");
  } else {
    throw Error(ErrorKind::config, "unknown experiment '" + name + "'");
  }

  std::ostringstream hash;
  hash << std::hex << cfg.raw.hash();
  nlohmann::json manifest{
      {"experiment", name},
      {"version", kVersion},
      {"config_hash", hash.str()},
      {"config", cfg.raw.canonical()},
      {"seeds", cfg.seeds},
      {"budgets",
       {{"steps", cfg.steps},
        {"trials", cfg.trials},
        {"net_steps", cfg.net_steps},
        {"votes", cfg.votes},
        {"orthant_samples", cfg.orthant_samples},
        {"nngp_draws", cfg.nngp_draws},
        {"nngp_width", cfg.nngp_width}}},
      {"data",
       {{"source", cfg.data.source == DataSource::synthetic ? "synthetic" : "idx"},
        {"d0", cfg.data.synth.d0},
        {"m_train", cfg.data.synth.m_train},
        {"m_test", cfg.data.synth.m_test}}},
      {"cells", summary.cells},
      {"results", results},
  };
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : summary.files) files.push_back(f.filename().string());
  manifest["files"] = files;
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : summary.failures) failures.push_back({{"cell", f.cell}, {"error", f.error}});
  manifest["failures"] = failures;
  const fs::path mp = cfg.out / (name + "_manifest.json");
  write_text(mp, manifest.dump(2) + "\n");
  summary.files.push_back(mp);
  log << name << ": " << summary.cells << " cells, " << summary.failures.size()
      << " failed; wrote " << summary.files.size() << " files to " << cfg.out.string() << "\n";
  return summary;
}

}  // namespace pmm::experiments
