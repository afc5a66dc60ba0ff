#pragma once

// Training objectives built on the autodiff tape:
//
//   L = L_c + lambda * (R_r + R_rho + R_tau)
//
// L_c is the Bradley-Terry binary cross-entropy over a pair set, and each
// R = |1 - corr(Y, Yhat)|^p penalizes a (smoothed) correlation coefficient
// computed over the whole mini-batch. Ground truth enters only as constants;
// gradients flow through the predictions.
//
// Smoothing:
//   rank_i(Yhat) = 1 + sum_{j != i} sigmoid(-(Yhat_i - Yhat_j) / T)
//   sign(d)     ~= tanh(d / T)
// The negative sigmoid argument makes the T -> 0 limit the strict descending
// rank (largest value -> rank 1). The printed form uses the opposite sign,
// which would converge to ascending ranks instead.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffrank/errors.hpp"
#include "diffrank/grad.hpp"
#include "diffrank/metrics.hpp"
#include "diffrank/pairs.hpp"

namespace diffrank::objectives {

using grad::Tape;
using grad::Value;

struct LossConfig {
  double temperature = 0.01;  // shared by the BT sigmoid, smooth rank and tanh
  double lambda = 1.0;
  double p_norm = 1.0;
  bool enable_r = true;
  bool enable_rho = true;
  bool enable_tau = true;
  bool average_pairs = true;  // mean (true) or sum of L_c over pairs

  // Per-equation overrides; fall back to `temperature`.
  std::optional<double> rank_temperature;
  std::optional<double> sign_temperature;

  double bt_t() const { return temperature; }
  double rank_t() const { return rank_temperature.value_or(temperature); }
  double sign_t() const { return sign_temperature.value_or(temperature); }

  void validate() const {
    auto positive = [](double t) { return std::isfinite(t) && t > 0.0; };
    if (!positive(temperature) || !positive(rank_t()) || !positive(sign_t())) {
      throw ConfigError("temperature must be positive");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw ConfigError("lambda must be nonnegative");
    }
    if (!(p_norm >= 1.0) || !std::isfinite(p_norm)) {
      throw ConfigError("p_norm must be at least 1");
    }
  }
};

// Variance below this counts as degenerate for the correlation regularizers.
inline constexpr double kDegenerateVariance = 1e-20;

namespace detail {

inline void require_temperature(double t) {
  if (!(t > 0.0)) throw DomainError("temperature must be positive");
}

inline void upper_pairs(std::size_t n, std::vector<std::size_t>& first,
                        std::vector<std::size_t>& second) {
  first.clear();
  second.clear();
  first.reserve(n * (n - 1) / 2);
  second.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      first.push_back(i);
      second.push_back(j);
    }
  }
}

}  // namespace detail

// p(y_i > y_j) = 1 / (1 + exp(-(yhat_i - yhat_j) / T)). Works elementwise when
// given equal-length vectors.
inline Value bt_probability(const Value& yhat_i, const Value& yhat_j, double t) {
  detail::require_temperature(t);
  return grad::sigmoid((yhat_i - yhat_j) * (1.0 / t));
}

// -[1[y_i > y_j] log p + 1[y_i < y_j] log(1 - p)], zero for tied targets.
// log p is evaluated as a stable log-sigmoid of the scaled difference, so the
// loss stays finite without clamping.
inline Value pairwise_bce(const Value& yhat_i, const Value& yhat_j, double y_i,
                          double y_j, double t) {
  detail::require_temperature(t);
  Tape& tape = yhat_i.tape();
  if (y_i == y_j) return tape.lift(0.0);
  const double s = y_i > y_j ? 1.0 : -1.0;
  return -grad::log_sigmoid((yhat_i - yhat_j) * (s / t));
}

// Mean (or sum) of pairwise_bce over every pair of `pairs`, vectorized.
// Pair indices address positions of `yhat`/`mos`.
inline Value pairwise_loss(const Value& yhat, std::span<const double> mos,
                           const pairs::PairSet& pairs, double t,
                           bool average = true) {
  detail::require_temperature(t);
  if (pairs.empty()) throw DomainError("pairwise_loss: empty pair set");
  if (yhat.size() != mos.size()) {
    throw ShapeError("pairwise_loss: predictions and scores differ in length");
  }
  const std::size_t m = pairs.size();
  std::vector<std::size_t> first(m);
  std::vector<std::size_t> second(m);
  std::vector<double> scale(m);
  std::vector<double> active(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto [i, j] = pairs.pairs[k];
    if (i >= mos.size() || j >= mos.size()) {
      throw ShapeError("pairwise_loss: pair index out of range");
    }
    first[k] = i;
    second[k] = j;
    const int s = metrics::sign(mos[i] - mos[j]);
    scale[k] = s / t;
    active[k] = s != 0 ? 1.0 : 0.0;
  }
  Tape& tape = yhat.tape();
  Value diff = grad::gather(yhat, first) - grad::gather(yhat, second);
  Value logp = grad::log_sigmoid(diff * tape.lift(scale));
  Value total = -grad::dot(logp, tape.lift(active));
  return average ? total * (1.0 / static_cast<double>(m)) : total;
}

// rank_i = 1 + sum_{j != i} sigmoid(-(y_i - y_j) / T).
inline Value smooth_rank(const Value& y, double t) {
  detail::require_temperature(t);
  const std::size_t n = y.size();
  if (!y.shape().is_vector() || n < 2) {
    throw ShapeError("smooth_rank: expects a vector of length >= 2");
  }
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  detail::upper_pairs(n, first, second);
  // s = sigmoid((y_j - y_i)/T) is i's indicator term; j receives 1 - s.
  Value s = grad::sigmoid(
      (grad::gather(y, second) - grad::gather(y, first)) * (1.0 / t));
  Value ranks = grad::scatter_add(s, first, n) +
                grad::scatter_add(1.0 - s, second, n);
  return ranks + 1.0;
}

// Pearson correlation between constant targets and a tape vector.
// Throws DegenerateInputError when either side has (near) zero variance.
inline Value pearson(std::span<const double> y, const Value& yhat) {
  const std::size_t n = y.size();
  if (yhat.size() != n || n < 2) {
    throw ShapeError("pearson: need equal-length inputs of length >= 2");
  }
  double my = 0.0;
  for (double v : y) my += v;
  my /= static_cast<double>(n);
  std::vector<double> yc(n);
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    yc[i] = y[i] - my;
    syy += yc[i] * yc[i];
  }
  if (syy <= kDegenerateVariance) {
    throw DegenerateInputError("pearson: constant targets");
  }
  Tape& tape = yhat.tape();
  Value h = yhat - grad::mean(yhat);
  Value shh = grad::dot(h, h);
  if (shh.item() <= kDegenerateVariance) {
    throw DegenerateInputError("pearson: constant predictions");
  }
  Value cov = grad::dot(tape.lift(yc), h);
  return cov / (grad::pow(shh, 0.5) * std::sqrt(syy));
}

// Pearson of strict ranks of the targets against smooth ranks of predictions.
inline Value smooth_spearman(std::span<const double> y, const Value& yhat,
                             double t) {
  if (y.size() != yhat.size()) {
    throw ShapeError("smooth_spearman: length mismatch");
  }
  const auto strict = metrics::rank_desc(y);
  const std::vector<double> ry(strict.begin(), strict.end());
  try {
    return pearson(ry, smooth_rank(yhat, t));
  } catch (const DegenerateInputError&) {
    throw DegenerateInputError("smooth_spearman: degenerate rank variance");
  }
}

inline Value smooth_sign(const Value& diff, double t) {
  detail::require_temperature(t);
  return grad::tanh(diff * (1.0 / t));
}

// (2 / (n(n-1))) sum_{i<j} sign(y_i - y_j) tanh((yhat_i - yhat_j) / T).
inline Value smooth_kendall(std::span<const double> y, const Value& yhat,
                            double t) {
  const std::size_t n = y.size();
  if (yhat.size() != n || n < 2) {
    throw ShapeError("smooth_kendall: need equal-length inputs of length >= 2");
  }
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  detail::upper_pairs(n, first, second);
  std::vector<double> target_sign(first.size());
  for (std::size_t k = 0; k < first.size(); ++k) {
    target_sign[k] = metrics::sign(y[first[k]] - y[second[k]]);
  }
  Tape& tape = yhat.tape();
  Value soft = smooth_sign(grad::gather(yhat, first) - grad::gather(yhat, second), t);
  const double norm = 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
  return grad::dot(soft, tape.lift(target_sign)) * norm;
}

// R = |1 - corr|^p.
inline Value regularizer(const Value& corr, double p) {
  if (!(p >= 1.0)) throw DomainError("regularizer: p must be at least 1");
  Value gap = grad::abs(1.0 - corr);
  return p == 1.0 ? gap : grad::pow(gap, p);
}

struct LossTerms {
  Value total;
  Value pairwise;
  // Regularizer values for monitoring; computed even when disabled.
  double r_pearson = 0.0;
  double r_spearman = 0.0;
  double r_kendall = 0.0;
};

// Full loss with a per-term breakdown. A regularizer whose correlation is
// degenerate (constant predictions) contributes the constant 1 with no
// gradient so the remaining terms can move the model off the plateau.
inline LossTerms loss_terms(const Value& yhat, std::span<const double> mos,
                            const pairs::PairSet& pairs, const LossConfig& cfg) {
  cfg.validate();
  if (yhat.size() < 2) throw DomainError("loss: batch size must be >= 2");
  Tape& tape = yhat.tape();

  auto guarded = [&](auto&& corr) -> Value {
    try {
      return regularizer(corr(), cfg.p_norm);
    } catch (const DegenerateInputError&) {
      return tape.lift(1.0);
    }
  };
  Value rr = guarded([&] { return pearson(mos, yhat); });
  Value rrho = guarded([&] { return smooth_spearman(mos, yhat, cfg.rank_t()); });
  Value rtau = guarded([&] { return smooth_kendall(mos, yhat, cfg.sign_t()); });

  LossTerms terms;
  terms.pairwise = pairwise_loss(yhat, mos, pairs, cfg.bt_t(), cfg.average_pairs);
  terms.r_pearson = rr.item();
  terms.r_spearman = rrho.item();
  terms.r_kendall = rtau.item();

  Value total = terms.pairwise;
  if (cfg.lambda > 0.0) {
    std::vector<Value> enabled;
    if (cfg.enable_r) enabled.push_back(rr);
    if (cfg.enable_rho) enabled.push_back(rrho);
    if (cfg.enable_tau) enabled.push_back(rtau);
    if (!enabled.empty()) {
      Value reg = enabled.front();
      for (std::size_t k = 1; k < enabled.size(); ++k) reg = reg + enabled[k];
      total = total + reg * cfg.lambda;
    }
  }
  terms.total = total;
  return terms;
}

inline Value total_loss(const Value& yhat, std::span<const double> mos,
                        const pairs::PairSet& pairs, const LossConfig& cfg) {
  return loss_terms(yhat, mos, pairs, cfg).total;
}

}  // namespace diffrank::objectives
