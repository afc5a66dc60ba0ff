#pragma once

// Brute-force reference implementations for the exact metrics, kept apart
// from the library code they check.

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using V = std::vector<double>;

// Two-pass textbook Pearson.
inline double pearson(const V& a, const V& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

// Average ranks, largest value first, by counting.
inline V average_ranks(const V& y) {
  V r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double greater = 0, equal = 0;
    for (double v : y) {
      if (v > y[i]) greater += 1;
      if (v == y[i]) equal += 1;
    }
    r[i] = greater + (equal + 1) / 2;
  }
  return r;
}

inline double kendall(const V& a, const V& b) {
  long long s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const int x = (a[i] > a[j]) - (a[i] < a[j]);
      const int y = (b[i] > b[j]) - (b[i] < b[j]);
      s += x * y;
    }
  }
  const double n = static_cast<double>(a.size());
  return 2.0 * static_cast<double>(s) / (n * (n - 1));
}

// Random vector with deliberate ties: half the entries come from {0..4}.
inline V random_with_ties(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> grid(0, 4);
  V v(n);
  for (double& x : v) x = std::bernoulli_distribution(0.5)(rng) ? grid(rng) : normal(rng);
  return v;
}

}  // namespace oracle
