#pragma once

// Adam + cosine-annealed training of an MlpScorer with the pairwise/listwise
// objective, and the held-out evaluation protocol.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "diffrank/errors.hpp"
#include "diffrank/grad.hpp"
#include "diffrank/metrics.hpp"
#include "diffrank/objectives.hpp"
#include "diffrank/pairs.hpp"
#include "diffrank/scorer.hpp"
#include "diffrank/synth.hpp"

namespace diffrank::train {

// ---- optimizer ---------------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// lr * 0.5 * (1 + cos(pi * t / t_max)), no restarts.
inline double cosine_lr(double lr, std::size_t t, std::size_t t_max) {
  if (t_max == 0) return lr;
  const double frac = static_cast<double>(std::min(t, t_max)) /
                      static_cast<double>(t_max);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state, double lr_t, const AdamOptions& opt = {}) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k];
    state.m[k] = opt.beta1 * state.m[k] + (1.0 - opt.beta1) * g;
    state.v[k] = opt.beta2 * state.v[k] + (1.0 - opt.beta2) * g * g;
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= lr_t * m_hat / (std::sqrt(v_hat) + opt.eps);
  }
}

// ---- configuration -----------------------------------------------------------

struct ExperimentConfig {
  pairs::Strategy strategy = pairs::Strategy::all_differing;
  objectives::LossConfig loss;
  double lr = 1e-4;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  AdamOptions adam;
  std::uint64_t seed = 0;

  synth::DatasetConfig dataset;
  std::string dataset_csv;  // when set, replaces the synthetic generator
  double train_fraction = 0.7;
  std::uint64_t split_seed = 7;

  std::vector<std::size_t> hidden = {32, 32};
  std::size_t pair_cap = 0;          // 0 = use every formed pair
  bool random_fixed_pairs = false;   // seeded matching for fixed-similar

  void validate() const {
    loss.validate();
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam.eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw ConfigError("train_fraction must lie strictly between 0 and 1");
    }
    for (std::size_t w : hidden) {
      if (w == 0) throw ConfigError("hidden widths must be positive");
    }
    if (dataset_csv.empty()) dataset.validate();
  }
};

struct DataSplit {
  std::vector<synth::Sample> train;
  std::vector<synth::Sample> test;
};

inline DataSplit prepare_data(const ExperimentConfig& cfg) {
  std::vector<synth::Sample> all = cfg.dataset_csv.empty()
                                       ? synth::generate_dataset(cfg.dataset)
                                       : synth::read_csv(cfg.dataset_csv);
  auto [train, test] = synth::split_by_content(all, cfg.train_fraction, cfg.split_seed);
  return {std::move(train), std::move(test)};
}

// ---- training ----------------------------------------------------------------

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double pairwise = 0.0;
  double r_pearson = 0.0;
  double r_spearman = 0.0;
  double r_kendall = 0.0;
  std::size_t n_pairs = 0;
  double pair_accuracy = 0.0;  // on the step's pairs with distinct targets
};

struct History {
  std::vector<StepRecord> steps;
  std::size_t epochs = 0;
  std::size_t steps_per_epoch = 0;

  template <class Field>
  double epoch_mean(std::size_t epoch, Field field) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const StepRecord& r : steps) {
      if (r.epoch == epoch) {
        s += field(r);
        ++n;
      }
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }
};

struct TrainResult {
  scorer::MlpScorer model;
  History history;
};

namespace detail {

inline double batch_pair_accuracy(std::span<const double> yhat,
                                  std::span<const double> mos,
                                  const pairs::PairSet& ps) {
  std::size_t valid = 0;
  std::size_t good = 0;
  for (const auto& [i, j] : ps.pairs) {
    const int s = metrics::sign(mos[i] - mos[j]);
    if (s == 0) continue;
    ++valid;
    if (metrics::sign(yhat[i] - yhat[j]) == s) ++good;
  }
  return valid ? static_cast<double>(good) / static_cast<double>(valid) : 1.0;
}

}  // namespace detail

// Optional hook to adjust the freshly initialized model (tests use it to
// perturb initial biases).
inline TrainResult train(const ExperimentConfig& cfg,
                         std::span<const synth::Sample> train_set,
                         void (*init_hook)(scorer::MlpScorer&) = nullptr) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");

  std::vector<std::size_t> widths{train_set.front().features.size()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(1);
  scorer::MlpScorer model = scorer::MlpScorer::init(widths, cfg.seed);
  if (init_hook) init_hook(model);

  const std::vector<pairs::SampleRef> pool = synth::to_refs(train_set);
  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);

  History history;
  history.epochs = cfg.epochs;
  history.steps_per_epoch = std::max<std::size_t>(1, train_set.size() / cfg.batch_size);
  const std::size_t total_steps = cfg.epochs * history.steps_per_epoch;
  history.steps.reserve(total_steps);

  AdamState state(model.parameter_count());
  std::size_t t = 0;
  std::vector<double> mos;
  std::vector<double> yhat_values;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < history.steps_per_epoch; ++s, ++t) {
      const auto batch = pairs::make_minibatch(pool, cfg.strategy, cfg.batch_size, rng);
      pairs::PairSet ps =
          cfg.strategy == pairs::Strategy::fixed_similar && cfg.random_fixed_pairs
              ? pairs::fixed_pairs_random(std::span<const pairs::SampleRef>(batch), rng)
              : pairs::form_pairs(batch, cfg.strategy);
      if (cfg.pair_cap > 0 && ps.size() > cfg.pair_cap) {
        for (std::size_t k = 0; k < cfg.pair_cap; ++k) {
          std::uniform_int_distribution<std::size_t> pick(k, ps.size() - 1);
          std::swap(ps.pairs[k], ps.pairs[pick(rng)]);
        }
        ps.pairs.resize(cfg.pair_cap);
      }

      grad::Tape tape;
      const auto bound = model.bind(tape);
      std::vector<grad::Value> scores;
      scores.reserve(batch.size());
      mos.clear();
      for (const auto& ref : batch) {
        scores.push_back(model.score(bound, train_set[ref.source].features));
        mos.push_back(ref.mos);
      }
      const grad::Value yhat = grad::stack(scores);
      const auto terms = objectives::loss_terms(yhat, mos, ps, cfg.loss);
      const auto grads = tape.backward(terms.total);
      const std::vector<double> g = model.flatten(grads, bound);

      const double lr_t = cosine_lr(cfg.lr, t, total_steps);
      adam_step(model.parameters(), g, state, lr_t, cfg.adam);

      yhat_values.assign(yhat.payload().begin(), yhat.payload().end());
      history.steps.push_back({epoch, t, lr_t, terms.total.item(),
                               terms.pairwise.item(), terms.r_pearson,
                               terms.r_spearman, terms.r_kendall, ps.size(),
                               detail::batch_pair_accuracy(yhat_values, mos, ps)});
    }
  }
  return {std::move(model), std::move(history)};
}

// ---- evaluation --------------------------------------------------------------

// Fraction of distinct-target pairs whose predicted order matches.
inline double pairwise_accuracy(std::span<const double> y,
                                std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ShapeError("pairwise_accuracy: length mismatch");
  std::size_t valid = 0;
  std::size_t good = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = i + 1; j < y.size(); ++j) {
      const int s = metrics::sign(y[i] - y[j]);
      if (s == 0) continue;
      ++valid;
      if (metrics::sign(yhat[i] - yhat[j]) == s) ++good;
    }
  }
  return valid ? static_cast<double>(good) / static_cast<double>(valid)
               : std::numeric_limits<double>::quiet_NaN();
}

struct EvalResult {
  double plcc = std::numeric_limits<double>::quiet_NaN();  // after 4PL fit
  double srcc = std::numeric_limits<double>::quiet_NaN();
  double krcc = std::numeric_limits<double>::quiet_NaN();
  double pair_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t n = 0;
  bool degenerate = false;
  bool fit_converged = true;
  std::string note;
};

// Metrics of raw predictions against targets. Constant predictions produce a
// flagged row instead of an exception.
inline EvalResult evaluate_scores(std::span<const double> yhat,
                                  std::span<const double> y) {
  if (yhat.empty()) throw DomainError("evaluate: empty split");
  EvalResult r;
  r.n = y.size();
  r.pair_accuracy = pairwise_accuracy(y, yhat);
  try {
    r.srcc = metrics::spearman(y, yhat);
    r.krcc = metrics::kendall(y, yhat);
    const auto fit = metrics::fit_4pl(yhat, y);
    r.fit_converged = fit.converged;
    std::vector<double> mapped(yhat.size());
    for (std::size_t i = 0; i < yhat.size(); ++i) mapped[i] = fit.params(yhat[i]);
    r.plcc = metrics::pearson(mapped, y);
  } catch (const DegenerateInputError& e) {
    r.degenerate = true;
    r.note = e.what();
  } catch (const DomainError& e) {
    r.degenerate = true;
    r.note = e.what();
  }
  return r;
}

inline std::vector<double> predict_all(const scorer::MlpScorer& model,
                                       std::span<const synth::Sample> split) {
  std::vector<double> out;
  out.reserve(split.size());
  for (const auto& s : split) out.push_back(model.predict(s.features));
  return out;
}

inline EvalResult evaluate(const scorer::MlpScorer& model,
                           std::span<const synth::Sample> split) {
  std::vector<double> y;
  y.reserve(split.size());
  for (const auto& s : split) y.push_back(s.mos);
  return evaluate_scores(predict_all(model, split), y);
}

// One row of a 2AFC file: human preference rate q that sample i beats j.
struct PreferencePair {
  std::size_t i = 0;
  std::size_t j = 0;
  double q = 0.5;
};

// Mean 2AFC score with hard model decisions (1, 0.5 on ties, 0).
inline double two_afc_score(std::span<const double> yhat,
                            std::span<const PreferencePair> prefs) {
  if (prefs.empty()) throw DomainError("two_afc_score: no pairs");
  double s = 0.0;
  for (const auto& p : prefs) {
    if (p.i >= yhat.size() || p.j >= yhat.size()) {
      throw DomainError("two_afc_score: pair index out of range");
    }
    const double a = yhat[p.i];
    const double b = yhat[p.j];
    const double decision = a > b ? 1.0 : (a < b ? 0.0 : 0.5);
    s += metrics::two_afc(p.q, decision);
  }
  return s / static_cast<double>(prefs.size());
}

}  // namespace diffrank::train
