#pragma once

// Ablation grids (pair formation, regularizer subsets, batch sizes), a
// parallel runner over config x seed, and the JSON / CSV report writers.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "diffrank/config.hpp"
#include "diffrank/errors.hpp"
#include "diffrank/metrics.hpp"
#include "diffrank/synth.hpp"
#include "diffrank/train.hpp"

namespace diffrank::ablate {

using nlohmann::json;
using train::ExperimentConfig;

// Learning rate used for the synthetic ablations. The default 1e-4 leaves
// the small scorer far from converged after 30 epochs on 1050 samples.
inline constexpr double kDeskLearningRate = 1e-2;

inline ExperimentConfig desk_preset() {
  ExperimentConfig c;
  c.lr = kDeskLearningRate;
  return c;
}

struct Cell {
  std::string label;
  ExperimentConfig config;
};

struct Grid {
  std::string name;
  std::vector<Cell> cells;
};

// Three strategies with the listwise terms switched off. all-similar cannot
// exceed the per-content sample count D, so its batch is capped at D.
inline Grid pair_formation_grid(const ExperimentConfig& base) {
  Grid g{"pair-formation", {}};
  for (auto s : {pairs::Strategy::fixed_similar, pairs::Strategy::all_similar,
                 pairs::Strategy::all_differing}) {
    ExperimentConfig c = base;
    c.strategy = s;
    c.loss.lambda = 0.0;
    std::string label(pairs::to_string(s));
    if (s == pairs::Strategy::all_similar && c.dataset_csv.empty()) {
      const std::size_t d = c.dataset.n_types * c.dataset.n_severities;
      if (c.batch_size > d) {
        c.batch_size = d;
        label += " (N=" + std::to_string(d) + ")";
      }
    }
    g.cells.push_back({label, c});
  }
  return g;
}

// All 2^3 on/off combinations of the Pearson, Spearman and Kendall terms.
inline Grid regularizer_grid(const ExperimentConfig& base) {
  Grid g{"regularizers", {}};
  for (int mask = 0; mask < 8; ++mask) {
    ExperimentConfig c = base;
    c.loss.enable_r = mask & 1;
    c.loss.enable_rho = mask & 2;
    c.loss.enable_tau = mask & 4;
    std::string label = "Lc";
    if (c.loss.enable_r) label += "+Rr";
    if (c.loss.enable_rho) label += "+Rrho";
    if (c.loss.enable_tau) label += "+Rtau";
    g.cells.push_back({label, c});
  }
  return g;
}

inline Grid batch_grid(const ExperimentConfig& base,
                       std::vector<std::size_t> sizes = {8, 16, 32, 64}) {
  Grid g{"batch-size", {}};
  for (std::size_t n : sizes) {
    ExperimentConfig c = base;
    c.batch_size = n;
    c.loss.enable_r = c.loss.enable_rho = c.loss.enable_tau = true;
    g.cells.push_back({"N=" + std::to_string(n), c});
  }
  return g;
}

inline Grid named_grid(const std::string& name, const ExperimentConfig& base) {
  if (name == "pair-formation") return pair_formation_grid(base);
  if (name == "regularizers") return regularizer_grid(base);
  if (name == "batch-size") return batch_grid(base);
  throw ConfigError("unknown grid '" + name +
                    "' (pair-formation, regularizers, batch-size)");
}

// ---- running -----------------------------------------------------------------

struct Run {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  train::EvalResult train_metrics;
  train::EvalResult test_metrics;
  std::vector<double> loss_curve;         // per-epoch mean total loss
  std::vector<double> regularizer_curve;  // per-epoch mean Rr + Rrho + Rtau
  double wall_s = 0.0;
};

struct Spread {
  double median = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
};

struct CellResult {
  std::string label;
  ExperimentConfig config;  // seed field holds the first seed
  std::string config_hash;
  std::vector<Run> runs;
};

struct GridResult {
  std::string name;
  std::vector<CellResult> cells;
};

inline std::vector<double> epoch_curve(const train::History& h, bool regularizer) {
  std::vector<double> out;
  for (std::size_t e = 0; e < h.epochs; ++e) {
    out.push_back(regularizer
                      ? h.epoch_mean(e, [](const train::StepRecord& r) {
                          return r.r_pearson + r.r_spearman + r.r_kendall;
                        })
                      : h.epoch_mean(e, [](const train::StepRecord& r) { return r.loss; }));
  }
  return out;
}

// One training run: prepare data, train, evaluate both splits. Failures are
// captured in the returned record.
inline Run run_one(ExperimentConfig cfg) {
  Run run;
  run.seed = cfg.seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    const train::DataSplit data = train::prepare_data(cfg);
    const train::TrainResult result = train::train(cfg, data.train);
    run.train_metrics = train::evaluate(result.model, data.train);
    run.test_metrics = train::evaluate(result.model, data.test);
    run.loss_curve = epoch_curve(result.history, false);
    run.regularizer_curve = epoch_curve(result.history, true);
  } catch (const std::exception& e) {
    run.failed = true;
    run.error = e.what();
  }
  run.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return run;
}

// Runs every cell with seeds base.seed, base.seed + 1, ... Work is spread over
// `threads` workers (0 = hardware concurrency); results land in grid order.
inline std::vector<GridResult> run(const std::vector<Grid>& grids,
                                   std::size_t n_seeds, std::size_t threads = 0) {
  if (n_seeds == 0) throw ConfigError("ablate: need at least one seed");
  std::vector<GridResult> out;
  struct Job {
    std::size_t grid, cell, seed;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < grids.size(); ++g) {
    if (grids[g].cells.empty()) throw ConfigError("ablate: empty grid " + grids[g].name);
    GridResult gr{grids[g].name, {}};
    for (std::size_t c = 0; c < grids[g].cells.size(); ++c) {
      const Cell& cell = grids[g].cells[c];
      gr.cells.push_back({cell.label, cell.config, config::config_hash(cell.config),
                          std::vector<Run>(n_seeds)});
      for (std::size_t s = 0; s < n_seeds; ++s) jobs.push_back({g, c, s});
    }
    out.push_back(std::move(gr));
  }
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, jobs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      const Job& j = jobs[k];
      ExperimentConfig cfg = grids[j.grid].cells[j.cell].config;
      cfg.seed += j.seed;
      out[j.grid].cells[j.cell].runs[j.seed] = run_one(cfg);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

// Median and range of one metric over the successful, non-degenerate runs.
template <class Field>
Spread summarize(const std::vector<Run>& runs, Field field) {
  std::vector<double> v;
  for (const Run& r : runs) {
    if (r.failed) continue;
    const double x = field(r);
    if (std::isfinite(x)) v.push_back(x);
  }
  Spread s;
  s.n = v.size();
  if (v.empty()) return s;
  s.median = metrics::median(v);
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

inline double median_test_srcc(const CellResult& c) {
  return summarize(c.runs, [](const Run& r) { return r.test_metrics.srcc; }).median;
}

// ---- report --------------------------------------------------------------------

namespace detail {

inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json metrics_json(const train::EvalResult& m) {
  json j{{"plcc", number(m.plcc)},
         {"srcc", number(m.srcc)},
         {"krcc", number(m.krcc)},
         {"pair_acc", number(m.pair_accuracy)},
         {"n", m.n},
         {"fit_converged", m.fit_converged}};
  if (m.degenerate) {
    j["degenerate"] = true;
    j["note"] = m.note;
  }
  return j;
}

inline json spread_json(const Spread& s) {
  return {{"median", number(s.median)}, {"min", number(s.min)},
          {"max", number(s.max)}, {"n", s.n}};
}

inline json curve_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

}  // namespace detail

inline json report_json(const std::vector<GridResult>& grids) {
  json report;
  report["metric_conventions"] = {
      {"plcc", "Pearson after a four-parameter logistic fit of predictions to MOS"},
      {"srcc", "Spearman with average (fractional) ranks for ties"},
      {"krcc", "Kendall tau-a, no tie correction"}};
  report["grids"] = json::array();
  for (const GridResult& g : grids) {
    json jg{{"name", g.name}, {"cells", json::array()}};
    for (const CellResult& c : g.cells) {
      json jc{{"label", c.label},
              {"config_hash", c.config_hash},
              {"config", config::to_json(c.config)}};
      json summary;
      for (const char* split : {"train", "test"}) {
        const bool test = split[1] == 'e';
        auto pick = [test](const Run& r) -> const train::EvalResult& {
          return test ? r.test_metrics : r.train_metrics;
        };
        summary[split] = {
            {"plcc", detail::spread_json(summarize(c.runs, [&](const Run& r) { return pick(r).plcc; }))},
            {"srcc", detail::spread_json(summarize(c.runs, [&](const Run& r) { return pick(r).srcc; }))},
            {"krcc", detail::spread_json(summarize(c.runs, [&](const Run& r) { return pick(r).krcc; }))},
            {"pair_acc", detail::spread_json(summarize(c.runs, [&](const Run& r) { return pick(r).pair_accuracy; }))}};
      }
      jc["summary"] = summary;
      jc["runs"] = json::array();
      std::size_t failed = 0;
      for (const Run& r : c.runs) {
        json jr{{"seed", r.seed}, {"wall_s", r.wall_s}};
        if (r.failed) {
          ++failed;
          jr["failed"] = true;
          jr["error"] = r.error;
        } else {
          jr["train"] = detail::metrics_json(r.train_metrics);
          jr["test"] = detail::metrics_json(r.test_metrics);
          jr["loss_curve"] = detail::curve_json(r.loss_curve);
          jr["regularizer_curve"] = detail::curve_json(r.regularizer_curve);
        }
        jc["runs"].push_back(jr);
      }
      jc["n_failed"] = failed;
      jg["cells"].push_back(jc);
    }
    report["grids"].push_back(jg);
  }
  return report;
}

// Deterministic record of one training run: config, per-epoch and per-step
// history, final metrics on both splits. Contains no timing.
inline json train_report(const ExperimentConfig& cfg, const train::TrainResult& result,
                         const train::EvalResult& train_m, const train::EvalResult& test_m) {
  const auto& hist = result.history;
  json h;
  h["config"] = config::to_json(cfg);
  h["config_hash"] = config::config_hash(cfg);
  h["steps_per_epoch"] = hist.steps_per_epoch;
  h["epochs"] = json::array();
  for (std::size_t e = 0; e < hist.epochs; ++e) {
    auto mean = [&](auto field) { return detail::number(hist.epoch_mean(e, field)); };
    h["epochs"].push_back(
        {{"epoch", e},
         {"loss", mean([](const train::StepRecord& r) { return r.loss; })},
         {"pairwise", mean([](const train::StepRecord& r) { return r.pairwise; })},
         {"r_pearson", mean([](const train::StepRecord& r) { return r.r_pearson; })},
         {"r_spearman", mean([](const train::StepRecord& r) { return r.r_spearman; })},
         {"r_kendall", mean([](const train::StepRecord& r) { return r.r_kendall; })},
         {"pair_acc", mean([](const train::StepRecord& r) { return r.pair_accuracy; })}});
  }
  h["steps"] = json::array();
  for (const auto& r : hist.steps) {
    h["steps"].push_back({{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr},
                          {"loss", r.loss}, {"pairwise", r.pairwise},
                          {"r_pearson", r.r_pearson}, {"r_spearman", r.r_spearman},
                          {"r_kendall", r.r_kendall}, {"n_pairs", r.n_pairs},
                          {"pair_acc", r.pair_accuracy}});
  }
  h["train"] = detail::metrics_json(train_m);
  h["test"] = detail::metrics_json(test_m);
  return h;
}

inline constexpr const char* kCsvHeader =
    "config_hash,strategy,Rr,Rrho,Rtau,T,lambda,batch,seed,split,plcc,srcc,krcc,pair_acc,wall_s";

// One row per run and split. Failed runs emit a single row with empty metrics
// and split "failed".
inline void write_csv(const GridResult& g, std::ostream& out) {
  auto num = [](double x) { return std::isfinite(x) ? synth::format_double(x) : std::string(); };
  out << kCsvHeader << '\n';
  for (const CellResult& c : g.cells) {
    const auto& l = c.config.loss;
    const std::string prefix =
        c.config_hash + ',' + std::string(pairs::to_string(c.config.strategy)) + ',' +
        (l.enable_r ? "1" : "0") + ',' + (l.enable_rho ? "1" : "0") + ',' +
        (l.enable_tau ? "1" : "0") + ',' + num(l.temperature) + ',' + num(l.lambda) +
        ',' + std::to_string(c.config.batch_size) + ',';
    for (const Run& r : c.runs) {
      if (r.failed) {
        out << prefix << r.seed << ",failed,,,,," << num(r.wall_s) << '\n';
        continue;
      }
      for (const char* split : {"train", "test"}) {
        const auto& m = split[1] == 'e' ? r.test_metrics : r.train_metrics;
        out << prefix << r.seed << ',' << split << ',' << num(m.plcc) << ','
            << num(m.srcc) << ',' << num(m.krcc) << ',' << num(m.pair_accuracy)
            << ',' << num(r.wall_s) << '\n';
      }
    }
  }
}

inline void write_csv(const GridResult& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_csv(g, out);
}

}  // namespace diffrank::ablate
