// diffrank: generate synthetic data, train and evaluate scorers, run
// ablation grids and the gradient-check suite.
//
// Exit codes: 0 ok, 1 other error, 2 config error, 3 infeasible strategy,
// 4 gradient check failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "diffrank/ablate.hpp"
#include "diffrank/checks.hpp"
#include "diffrank/config.hpp"
#include "diffrank/errors.hpp"
#include "diffrank/scorer.hpp"
#include "diffrank/synth.hpp"
#include "diffrank/train.hpp"

namespace {

using namespace diffrank;
using nlohmann::json;

constexpr int kConfigExit = 2;
constexpr int kInfeasibleExit = 3;
constexpr int kGradcheckExit = 4;

struct ConfigSource {
  std::string preset = "desk";
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "base values: desk (lr 1e-2) or reference (lr 1e-4)")
        ->check(CLI::IsMember({"desk", "reference"}));
    cmd->add_option("-c,--config", file, "JSON config file");
    cmd->add_option("--set", overrides, "key=value override, repeatable");
  }

  train::ExperimentConfig resolve() const {
    train::ExperimentConfig c = preset == "desk" ? ablate::desk_preset() : train::ExperimentConfig{};
    if (!file.empty()) c = config::load(file, c);
    for (const auto& o : overrides) c = config::apply_override(o, c);
    c.validate();
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << text;
}

std::vector<train::PreferencePair> read_preferences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<train::PreferencePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != "i,j,q") throw ParseError("header must be 'i,j,q'", lineno);
      continue;
    }
    std::istringstream row(line);
    train::PreferencePair p;
    char c1 = 0, c2 = 0;
    if (!(row >> p.i >> c1 >> p.j >> c2 >> p.q) || c1 != ',' || c2 != ',' ||
        !(p.q >= 0.0 && p.q <= 1.0)) {
      throw ParseError("malformed preference row '" + line + "'", lineno);
    }
    out.push_back(p);
  }
  return out;
}

int cmd_gen(const ConfigSource& src, const std::string& out_path) {
  const auto cfg = src.resolve();
  const auto data = synth::generate_dataset(cfg.dataset);
  synth::write_csv(data, out_path);
  std::cout << "wrote " << data.size() << " samples to " << out_path << '\n';
  return 0;
}

int cmd_train(const ConfigSource& src, const std::string& data_path,
              const std::string& snapshot, const std::string& history_path) {
  auto cfg = src.resolve();
  if (!data_path.empty()) cfg.dataset_csv = data_path;
  const auto data = train::prepare_data(cfg);
  const auto result = train::train(cfg, data.train);
  result.model.save(snapshot);

  const auto train_m = train::evaluate(result.model, data.train);
  const auto test_m = train::evaluate(result.model, data.test);
  const json h = ablate::train_report(cfg, result, train_m, test_m);
  write_text(history_path, h.dump(1) + "\n");

  std::printf("train: srcc %.4f  krcc %.4f  plcc %.4f  pair_acc %.4f\n", train_m.srcc,
              train_m.krcc, train_m.plcc, train_m.pair_accuracy);
  std::printf("test:  srcc %.4f  krcc %.4f  plcc %.4f  pair_acc %.4f\n", test_m.srcc,
              test_m.krcc, test_m.plcc, test_m.pair_accuracy);
  return 0;
}

int cmd_eval(const ConfigSource& src, const std::string& snapshot,
             const std::string& data_path, const std::string& split,
             const std::string& prefs_path, const std::string& out_path) {
  auto cfg = src.resolve();
  if (!data_path.empty()) cfg.dataset_csv = data_path;
  const auto model = scorer::MlpScorer::load(snapshot);
  std::vector<synth::Sample> samples;
  if (split == "all") {
    samples = cfg.dataset_csv.empty() ? synth::generate_dataset(cfg.dataset)
                                      : synth::read_csv(cfg.dataset_csv);
  } else {
    auto parts = train::prepare_data(cfg);
    samples = split == "train" ? std::move(parts.train) : std::move(parts.test);
  }
  const auto yhat = train::predict_all(model, samples);
  std::vector<double> y;
  for (const auto& s : samples) y.push_back(s.mos);
  json out = ablate::detail::metrics_json(train::evaluate_scores(yhat, y));
  out["split"] = split;
  if (!prefs_path.empty()) {
    const auto prefs = read_preferences(prefs_path);
    out["two_afc"] = train::two_afc_score(yhat, prefs);
    out["two_afc_pairs"] = prefs.size();
  }
  const std::string text = out.dump(1) + "\n";
  if (out_path.empty()) std::cout << text;
  else write_text(out_path, text);
  return 0;
}

int cmd_ablate(const ConfigSource& src, std::vector<std::string> grid_names,
               const std::string& grid_file, std::size_t seeds, std::size_t threads,
               const std::string& out_dir) {
  auto base = src.resolve();
  std::vector<ablate::Grid> grids;
  if (!grid_file.empty()) {
    const json spec = config::parse_json_file(grid_file);
    if (spec.contains("base")) base = config::apply_json(spec["base"], base);
    if (spec.contains("seeds")) seeds = spec["seeds"].get<std::size_t>();
    if (spec.contains("grids")) {
      for (const auto& n : spec["grids"]) grid_names.push_back(n.get<std::string>());
    }
    if (spec.contains("cells")) {
      ablate::Grid custom{spec.value("name", std::string("custom")), {}};
      for (const auto& c : spec["cells"]) {
        custom.cells.push_back({c.at("label").get<std::string>(),
                                config::apply_json(c.value("set", json::object()), base)});
      }
      grids.push_back(std::move(custom));
    }
  }
  if (grid_names.empty() && grids.empty()) {
    grid_names = {"pair-formation", "regularizers", "batch-size"};
  }
  for (const auto& n : grid_names) grids.push_back(ablate::named_grid(n, base));

  const auto results = ablate::run(grids, seeds, threads);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/report.json", ablate::report_json(results).dump(1) + "\n");
  for (const auto& g : results) {
    ablate::write_csv(g, out_dir + "/" + g.name + ".csv");
    std::printf("%s\n", g.name.c_str());
    for (const auto& c : g.cells) {
      auto med = [&](auto f) { return ablate::summarize(c.runs, f).median; };
      std::size_t failed = 0;
      for (const auto& r : c.runs) failed += r.failed;
      std::printf("  %-22s plcc %.4f  srcc %.4f  krcc %.4f", c.label.c_str(),
                  med([](const ablate::Run& r) { return r.test_metrics.plcc; }),
                  med([](const ablate::Run& r) { return r.test_metrics.srcc; }),
                  med([](const ablate::Run& r) { return r.test_metrics.krcc; }));
      if (failed) std::printf("  (%zu failed: %s)", failed, c.runs.front().error.c_str());
      std::printf("\n");
    }
  }
  std::cout << "report written to " << out_dir << '\n';
  return 0;
}

int cmd_gradcheck(const checks::GradCheckOptions& opt) {
  bool ok = true;
  for (const auto& row : checks::run_gradient_suite(opt)) {
    std::printf("%-20s max rel error %.3e over %zu points  %s\n", row.name.c_str(),
                row.max_error, row.points, row.pass ? "ok" : "FAIL");
    ok = ok && row.pass;
  }
  return ok ? 0 : kGradcheckExit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable ranking objectives on a synthetic quality benchmark"};
  app.require_subcommand(1);

  ConfigSource gen_src, train_src, eval_src, ablate_src;

  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "write a synthetic dataset CSV");
  gen_src.attach(gen);
  gen->add_option("-o,--out", gen_out, "output CSV")->required();

  std::string train_data, snapshot, history = "history.json";
  auto* tr = app.add_subcommand("train", "train one configuration");
  train_src.attach(tr);
  tr->add_option("--data", train_data, "dataset CSV (default: synthetic)");
  tr->add_option("-o,--snapshot", snapshot, "weight snapshot output")->required();
  tr->add_option("--history", history, "history/report JSON output");

  std::string eval_snapshot, eval_data, split = "test", prefs, eval_out;
  auto* ev = app.add_subcommand("eval", "evaluate a snapshot");
  eval_src.attach(ev);
  ev->add_option("-s,--snapshot", eval_snapshot, "weight snapshot")->required();
  ev->add_option("--data", eval_data, "dataset CSV (default: synthetic)");
  ev->add_option("--split", split, "all, train or test")
      ->check(CLI::IsMember({"all", "train", "test"}));
  ev->add_option("--pairs", prefs, "2AFC CSV with header i,j,q (indices into the split)");
  ev->add_option("-o,--out", eval_out, "metrics JSON output (default: stdout)");

  std::vector<std::string> grid_names;
  std::string grid_file, out_dir = "ablation";
  std::size_t seeds = 5, threads = 0;
  auto* ab = app.add_subcommand("ablate", "run ablation grids");
  ablate_src.attach(ab);
  ab->add_option("--grid", grid_names, "pair-formation, regularizers, batch-size");
  ab->add_option("--grid-file", grid_file, "JSON grid spec");
  ab->add_option("--seeds", seeds, "seeds per cell");
  ab->add_option("--threads", threads, "worker threads (0 = all cores)");
  ab->add_option("--out-dir", out_dir, "report directory");

  checks::GradCheckOptions gc;
  auto* gcmd = app.add_subcommand("gradcheck", "finite-difference check of all objectives");
  gcmd->add_option("--points", gc.points, "random points per function");
  gcmd->add_option("--tolerance", gc.tolerance, "max relative error");
  gcmd->add_option("--seed", gc.seed, "point sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*gen) return cmd_gen(gen_src, gen_out);
    if (*tr) return cmd_train(train_src, train_data, snapshot, history);
    if (*ev) return cmd_eval(eval_src, eval_snapshot, eval_data, split, prefs, eval_out);
    if (*ab) return cmd_ablate(ablate_src, grid_names, grid_file, seeds, threads, out_dir);
    if (*gcmd) return cmd_gradcheck(gc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const InfeasibleStrategyError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasibleExit;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
