#pragma once

// Exact (non-differentiable) evaluation metrics: PLCC/SRCC/KRCC, the
// four-parameter logistic fit used before PLCC, and the 2AFC score.
//
// Conventions:
//   * covariance and deviations use 1/n normalization;
//   * SRCC ranks ties with their average rank;
//   * KRCC is tau-a (tied pairs contribute 0, no tie correction).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "diffrank/errors.hpp"

namespace diffrank::metrics {

namespace detail {

inline void require_pair(std::span<const double> a, std::span<const double> b,
                         std::size_t min_n, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": length mismatch (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.size() < min_n) {
    throw DomainError(std::string(what) + ": need at least " +
                      std::to_string(min_n) + " entries");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw DomainError(std::string(what) + ": non-finite score");
    }
  }
}

inline double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) /
         static_cast<double>(x.size());
}

}  // namespace detail

inline int sign(double x) { return (x > 0.0) - (x < 0.0); }

inline double median(std::span<const double> x) {
  if (x.empty()) throw DomainError("median of empty sequence");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Population standard deviation.
inline double stddev(std::span<const double> x) {
  const double m = detail::mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

inline double pearson(std::span<const double> y, std::span<const double> yhat) {
  detail::require_pair(y, yhat, 2, "pearson");
  const double my = detail::mean(y);
  const double mh = detail::mean(yhat);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = y[i] - my;
    const double b = yhat[i] - mh;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateInputError("pearson: zero variance input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// rank_i = 1 + #{j : y_j > y_i}. Largest value gets rank 1; ties share the
// smallest rank of their group.
inline std::vector<int> rank_desc(std::span<const double> y) {
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<int> rank(y.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && y[order[k]] == y[order[k - 1]]) {
      rank[order[k]] = rank[order[k - 1]];
    } else {
      rank[order[k]] = static_cast<int>(k) + 1;
    }
  }
  return rank;
}

// Descending fractional ranks: tied values receive the mean of the positions
// they occupy.
inline std::vector<double> average_ranks(std::span<const double> y) {
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<double> rank(y.size());
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && y[order[end]] == y[order[start]]) ++end;
    const double r = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) rank[order[k]] = r;
    start = end;
  }
  return rank;
}

inline double spearman(std::span<const double> y,
                       std::span<const double> yhat) {
  detail::require_pair(y, yhat, 2, "spearman");
  const auto ry = average_ranks(y);
  const auto rh = average_ranks(yhat);
  try {
    return pearson(ry, rh);
  } catch (const DegenerateInputError&) {
    throw DegenerateInputError("spearman: constant ranking");
  }
}

// Kendall tau-a.
inline double kendall(std::span<const double> y, std::span<const double> yhat) {
  detail::require_pair(y, yhat, 2, "kendall");
  const std::size_t n = y.size();
  long long s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      s += sign(y[i] - y[j]) * sign(yhat[i] - yhat[j]);
    }
  }
  return 2.0 * static_cast<double>(s) /
         (static_cast<double>(n) * static_cast<double>(n - 1));
}

// ---- four-parameter logistic ----------------------------------------------

struct FourPLParams {
  double eta1 = 1.0;
  double eta2 = 0.0;
  double eta3 = 0.0;
  double eta4 = 1.0;

  double operator()(double x) const {
    const double z = -(x - eta3) / eta4;
    // 1 / (1 + exp(z)) evaluated without overflow.
    const double s = z > 0 ? std::exp(-z) / (1.0 + std::exp(-z))
                           : 1.0 / (1.0 + std::exp(z));
    return (eta1 - eta2) * s + eta2;
  }
};

struct FourPLFit {
  FourPLParams params;
  bool converged = false;
  std::size_t iterations = 0;
  double residual = 0.0;  // sum of squared residuals at params
};

struct FitOptions {
  std::size_t max_iterations = 500;
  double step_tolerance = 1e-10;
  double initial_damping = 1e-3;
};

namespace detail {

inline double sse(const FourPLParams& p, std::span<const double> x,
                  std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - p(x[i]);
    s += r * r;
  }
  return s;
}

// Solves a 4x4 system in place by Gaussian elimination with partial pivoting.
inline bool solve4(std::array<std::array<double, 4>, 4> a,
                   std::array<double, 4> b, std::array<double, 4>& x) {
  for (int c = 0; c < 4; ++c) {
    int piv = c;
    for (int r = c + 1; r < 4; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    if (!(std::fabs(a[piv][c]) > 0.0)) return false;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (int r = c + 1; r < 4; ++r) {
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < 4; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (int r = 3; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < 4; ++k) s -= a[r][k] * x[k];
    x[r] = s / a[r][r];
  }
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace detail

// Least-squares fit of y ~ (eta1 - eta2) / (1 + exp(-(yhat - eta3)/eta4)) + eta2
// by damped Gauss-Newton (Marquardt-scaled Levenberg damping).
inline FourPLFit fit_4pl(std::span<const double> yhat, std::span<const double> y,
                         const FitOptions& opt = {}) {
  detail::require_pair(yhat, y, 5, "fit_4pl");
  const double sd_hat = stddev(yhat);
  if (sd_hat == 0.0) throw DegenerateInputError("fit_4pl: constant predictions");
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*ymin == *ymax) throw DegenerateInputError("fit_4pl: constant targets");

  FourPLParams p{*ymax, *ymin, median(yhat), sd_hat / 4.0};
  double cost = detail::sse(p, yhat, y);
  double damping = opt.initial_damping;

  FourPLFit fit;
  const std::size_t n = yhat.size();
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    fit.iterations = it + 1;
    if (cost == 0.0) {
      fit.converged = true;
      break;
    }

    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (yhat[i] - p.eta3) / p.eta4;
      const double s = 1.0 / (1.0 + std::exp(-u));
      const double ds = s * (1.0 - s);
      const double amp = p.eta1 - p.eta2;
      const std::array<double, 4> j{s, 1.0 - s, -amp * ds / p.eta4,
                                    -amp * ds * u / p.eta4};
      const double r = y[i] - ((p.eta1 - p.eta2) * s + p.eta2);
      for (int a = 0; a < 4; ++a) {
        jtr[a] += j[a] * r;
        for (int b = 0; b < 4; ++b) jtj[a][b] += j[a] * j[b];
      }
    }

    // Retry with growing damping until the cost decreases.
    bool accepted = false;
    double step_norm = 0.0;
    while (damping < 1e20) {
      auto lhs = jtj;
      for (int a = 0; a < 4; ++a) {
        lhs[a][a] += damping * std::max(jtj[a][a], 1e-300);
      }
      std::array<double, 4> delta{};
      if (detail::solve4(lhs, jtr, delta)) {
        FourPLParams trial{p.eta1 + delta[0], p.eta2 + delta[1],
                           p.eta3 + delta[2], p.eta4 + delta[3]};
        const double c = trial.eta4 != 0.0 ? detail::sse(trial, yhat, y)
                                           : INFINITY;
        if (std::isfinite(c) && c <= cost) {
          step_norm = std::sqrt(delta[0] * delta[0] + delta[1] * delta[1] +
                                delta[2] * delta[2] + delta[3] * delta[3]);
          p = trial;
          cost = c;
          damping = std::max(damping / 10.0, 1e-15);
          accepted = true;
          break;
        }
      }
      damping *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: a stationary point.
      fit.converged = true;
      break;
    }
    if (step_norm < opt.step_tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.params = p;
  fit.residual = cost;
  return fit;
}

// PLCC after mapping predictions through the fitted logistic.
inline double plcc_after_fit(std::span<const double> yhat,
                             std::span<const double> y) {
  const FourPLFit fit = fit_4pl(yhat, y);
  std::vector<double> mapped(yhat.size());
  for (std::size_t i = 0; i < yhat.size(); ++i) mapped[i] = fit.params(yhat[i]);
  return pearson(mapped, y);
}

// Two-alternative forced choice agreement between a human preference rate q
// and a model preference p.
inline double two_afc(double q, double p) {
  if (!(q >= 0.0 && q <= 1.0) || !(p >= 0.0 && p <= 1.0)) {
    throw DomainError("two_afc: probabilities must lie in [0, 1]");
  }
  return q * p + (1.0 - q) * (1.0 - p);
}

}  // namespace diffrank::metrics
