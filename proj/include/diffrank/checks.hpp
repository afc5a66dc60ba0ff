#pragma once

// Finite-difference gradient suite for the training objectives. Shared by the
// `gradcheck` CLI subcommand and the test binaries.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diffrank/grad.hpp"
#include "diffrank/objectives.hpp"
#include "diffrank/pairs.hpp"

namespace diffrank::checks {

struct GradCheckOptions {
  std::size_t points = 100;
  std::size_t batch = 8;
  double temperature = 0.5;
  double step = 1e-6;
  double tolerance = 1e-4;
  std::uint64_t seed = 12345;
};

struct GradCheckRow {
  std::string name;
  double max_error = 0.0;
  std::size_t points = 0;
  bool pass = false;
};

inline std::vector<GradCheckRow> run_gradient_suite(const GradCheckOptions& opt = {}) {
  using grad::Tape;
  using grad::Value;

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> score(1.0, 5.0);

  std::vector<pairs::SampleRef> refs(opt.batch);
  for (std::size_t i = 0; i < opt.batch; ++i) refs[i].index = i;
  const pairs::PairSet all = pairs::all_pairs_differing(refs);

  objectives::LossConfig cfg;
  cfg.temperature = opt.temperature;
  const double t = opt.temperature;

  std::vector<GradCheckRow> rows = {{"pairwise_bce"},     {"smooth_spearman"},
                                    {"smooth_kendall"},   {"pearson_regularizer"},
                                    {"total_loss"}};
  for (std::size_t k = 0; k < opt.points; ++k) {
    std::vector<double> point(opt.batch);
    std::vector<double> mos(opt.batch);
    for (double& v : point) v = normal(rng);
    for (double& v : mos) v = score(rng);

    auto bce = [&](Tape& tape, Value x) {
      Value s = tape.lift(0.0);
      for (const auto& [i, j] : all.pairs) {
        s = s + objectives::pairwise_bce(grad::element(x, i), grad::element(x, j),
                                         mos[i], mos[j], t);
      }
      return s * (1.0 / static_cast<double>(all.size()));
    };
    auto spearman = [&](Tape&, Value x) { return objectives::smooth_spearman(mos, x, t); };
    auto kendall = [&](Tape&, Value x) { return objectives::smooth_kendall(mos, x, t); };
    auto pearson_reg = [&](Tape&, Value x) {
      return objectives::regularizer(objectives::pearson(mos, x), cfg.p_norm);
    };
    auto total = [&](Tape&, Value x) { return objectives::total_loss(x, mos, all, cfg); };

    const double errors[] = {grad::grad_check(bce, point, opt.step),
                             grad::grad_check(spearman, point, opt.step),
                             grad::grad_check(kendall, point, opt.step),
                             grad::grad_check(pearson_reg, point, opt.step),
                             grad::grad_check(total, point, opt.step)};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      rows[r].max_error = std::max(rows[r].max_error, errors[r]);
      ++rows[r].points;
    }
  }
  for (auto& r : rows) r.pass = r.max_error < opt.tolerance;
  return rows;
}

}  // namespace diffrank::checks
