// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffrank/ablate.hpp"
#include "diffrank/checks.hpp"
#include "diffrank/metrics.hpp"
#include "diffrank/objectives.hpp"
#include "diffrank/pairs.hpp"
#include "diffrank/train.hpp"
#include "oracles.hpp"

namespace {

using namespace diffrank;
using V = std::vector<double>;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(),
              o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

V spaced(std::mt19937_64& rng, std::size_t n, double gap) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  V v(n);
  double x = u(rng);
  for (double& e : v) {
    e = x;
    x += gap + u(rng);
  }
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  const auto rows = checks::run_gradient_suite({});
  const double elapsed = seconds_since(start);
  Outcome o;
  double worst = 0.0;
  for (const auto& r : rows) {
    o.pass = o.pass && r.pass;
    worst = std::max(worst, r.max_error);
    if (!r.pass) o.detail += r.name + " ";
  }
  o.pass = o.pass && elapsed < 30.0;
  o.detail += fmt("%zu functions x 100 points, worst rel error %.2e, %.2f s", rows.size(),
                  worst, elapsed);
  return o;
}

Outcome smooth_limits() {
  std::mt19937_64 rng(101);
  double worst_rho = 0.0, worst_tau = 0.0;
  for (int k = 0; k < 50; ++k) {
    const V y = spaced(rng, 16, 0.1);
    const V yh = spaced(rng, 16, 0.1);
    grad::Tape t;
    const grad::Value p = t.lift(yh);
    const V ry = oracle::average_ranks(y), rh = oracle::average_ranks(yh);
    worst_rho = std::max(worst_rho, std::fabs(objectives::smooth_spearman(y, p, 1e-4).item() -
                                              oracle::pearson(ry, rh)));
    worst_tau = std::max(worst_tau, std::fabs(objectives::smooth_kendall(y, p, 1e-4).item() -
                                              oracle::kendall(y, yh)));
  }
  double worst_sum = 0.0;
  std::normal_distribution<double> normal;
  for (double temp : {1e-4, 0.01, 0.5, 3.0, 100.0}) {
    for (std::size_t n : {2u, 7u, 16u, 64u}) {
      V y(n);
      for (double& v : y) v = normal(rng);
      grad::Tape t;
      double s = 0.0;
      for (double v : objectives::smooth_rank(t.lift(y), temp).payload()) s += v;
      worst_sum = std::max(worst_sum, std::fabs(s - n * (n + 1) / 2.0));
    }
  }
  return {worst_rho < 1e-3 && worst_tau < 1e-3 && worst_sum <= 1e-12,
          fmt("T=1e-4 gap vs exact: spearman %.1e kendall %.1e; rank-sum drift %.1e", worst_rho,
              worst_tau, worst_sum)};
}

Outcome exact_metrics() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  double kendall_gap = 0.0, spearman_gap = 0.0, affine_gap = 0.0;
  int used = 0;
  while (used < 200) {
    const V y = oracle::random_with_ties(rng, 24);
    const V yh = oracle::random_with_ties(rng, 24);
    const V ry = oracle::average_ranks(y), rh = oracle::average_ranks(yh);
    if (metrics::stddev(ry) == 0 || metrics::stddev(rh) == 0) continue;
    ++used;
    kendall_gap = std::max(kendall_gap, std::fabs(metrics::kendall(y, yh) - oracle::kendall(y, yh)));
    spearman_gap =
        std::max(spearman_gap, std::fabs(metrics::spearman(y, yh) - oracle::pearson(ry, rh)));
    const double a = u(rng), b = u(rng) - 5.0;
    V ya(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) ya[i] = a * y[i] + b;
    affine_gap = std::max(affine_gap,
                          std::fabs(metrics::pearson(ya, yh) - metrics::pearson(y, yh)));
  }
  return {kendall_gap == 0.0 && spearman_gap <= 1e-12 && affine_gap <= 1e-9,
          fmt("200 tied vectors: kendall gap %.1e, spearman gap %.1e, pearson affine gap %.1e",
              kendall_gap, spearman_gap, affine_gap)};
}

Outcome logistic_fit() {
  V x(50), y(50);
  const metrics::FourPLParams truth{1.0, 0.0, 0.5, 0.1};
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(i) / 49.0;
    y[i] = truth(x[i]);
  }
  const auto fit = metrics::fit_4pl(x, y);
  // Relative per component; eta2 = 0 falls back to an absolute gap.
  auto rel = [](double got, double want) {
    return std::fabs(got - want) / std::max(std::fabs(want), 1.0);
  };
  const double worst = std::max({rel(fit.params.eta1, truth.eta1), rel(fit.params.eta2, truth.eta2),
                                 rel(fit.params.eta3, truth.eta3), rel(fit.params.eta4, truth.eta4)});
  const double plcc = metrics::plcc_after_fit(x, y);
  bool threw = false;
  try {
    metrics::fit_4pl(V(20, 3.0), V(y.begin(), y.begin() + 20));
  } catch (const DegenerateInputError&) {
    threw = true;
  }
  return {worst <= 1e-3 && plcc >= 0.999 && threw,
          fmt("worst parameter rel error %.1e, plcc %.6f, constant prediction %s", worst, plcc,
              threw ? "rejected" : "accepted")};
}

Outcome pair_counts() {
  std::vector<pairs::SampleRef> pool;
  for (std::int64_t c = 0; c < 60; ++c) {
    for (int k = 0; k < 25; ++k) {
      const std::size_t row = pool.size();
      pool.push_back({row, c, 1.0 + 0.1 * k, row});
    }
  }
  std::mt19937_64 rng(303);
  int bad = 0;
  for (std::size_t n = 2; n <= 64; ++n) {
    const auto d = pairs::make_minibatch(pool, pairs::Strategy::all_differing, n, rng);
    if (pairs::all_pairs_differing(d).size() != n * (n - 1) / 2) ++bad;
    if (pairs::all_pairs_similar(d).size() > n * (n - 1) / 2) ++bad;
    if (n % 2 == 0) {
      const auto f = pairs::make_minibatch(pool, pairs::Strategy::fixed_similar, n, rng);
      if (pairs::fixed_pairs(f).size() != n / 2) ++bad;
    }
    if (n <= 25) {
      const auto s = pairs::make_minibatch(pool, pairs::Strategy::all_similar, n, rng);
      if (pairs::all_pairs_similar(s).size() != n * (n - 1) / 2) ++bad;
    } else {
      try {
        pairs::make_minibatch(pool, pairs::Strategy::all_similar, n, rng);
        ++bad;
      } catch (const InfeasibleStrategyError& e) {
        const std::string msg = e.what();
        if (msg.find("N=" + std::to_string(n)) == std::string::npos ||
            msg.find("D=25") == std::string::npos) {
          ++bad;
        }
      }
    }
  }
  return {bad == 0, fmt("N=2..64 on 60 contents x 25, %d violations", bad)};
}

const ablate::CellResult& cell(const ablate::GridResult& g, const std::string& label) {
  for (const auto& c : g.cells) {
    if (c.label == label) return c;
  }
  throw std::runtime_error("no cell " + label);
}

double median_srcc(const ablate::GridResult& g, const std::string& label) {
  return ablate::median_test_srcc(cell(g, label));
}

Outcome pair_formation() {
  const auto start = Clock::now();
  const auto res = ablate::run({ablate::pair_formation_grid(ablate::desk_preset())}, 5);
  const double elapsed = seconds_since(start);
  const double fixed = median_srcc(res[0], "fixed-similar");
  const double diff = median_srcc(res[0], "all-differing");
  return {diff >= fixed && diff >= 0.85 && elapsed < 300.0,
          fmt("median test SRCC all-differing %.4f vs fixed-similar %.4f, %.1f s", diff, fixed,
              elapsed)};
}

Outcome regularizers() {
  const auto res = ablate::run({ablate::regularizer_grid(ablate::desk_preset())}, 5);
  const double base = median_srcc(res[0], "Lc");
  const auto& all = cell(res[0], "Lc+Rr+Rrho+Rtau");
  const double full = ablate::median_test_srcc(all);
  int falling = 0, n = 0;
  for (const auto& r : all.runs) {
    if (r.failed || r.regularizer_curve.empty()) continue;
    ++n;
    if (r.regularizer_curve.back() < r.regularizer_curve.front()) ++falling;
  }
  return {full >= base - 0.01 && n == 5 && falling == n,
          fmt("median test SRCC all terms %.4f vs Lc only %.4f; regularizer fell in %d/%d runs",
              full, base, falling, n)};
}

Outcome batch_size() {
  const auto res = ablate::run({ablate::batch_grid(ablate::desk_preset(), {8, 64})}, 5);
  const double small = median_srcc(res[0], "N=8");
  const double large = median_srcc(res[0], "N=64");
  return {large >= small,
          fmt("median test SRCC N=64 %.4f vs N=8 %.4f (equal epochs, same lr)", large, small)};
}

Outcome two_afc() {
  int bad = 0;
  if (metrics::two_afc(1.0, 1.0) != 1.0) ++bad;
  for (double p = 0.0; p <= 1.0; p += 0.0625) {
    if (metrics::two_afc(0.5, p) != 0.5) ++bad;
    for (double q = 0.0; q <= 1.0; q += 0.0625) {
      if (metrics::two_afc(q, p) != metrics::two_afc(1.0 - q, 1.0 - p)) ++bad;
    }
  }
  return {bad == 0, fmt("perfect, indifferent and label-swap identities, %d violations", bad)};
}

Outcome determinism() {
  auto once = [] {
    const auto cfg = ablate::desk_preset();
    const auto data = train::prepare_data(cfg);
    const auto result = train::train(cfg, data.train);
    std::ostringstream snap;
    result.model.save(snap);
    const auto report = ablate::train_report(cfg, result, train::evaluate(result.model, data.train),
                                             train::evaluate(result.model, data.test));
    return std::pair{snap.str(), report.dump()};
  };
  const auto a = once();
  const auto b = once();
  const bool same_snap = a.first == b.first;
  const bool same_report = a.second == b.second;
  return {same_snap && same_report,
          fmt("snapshot %zu bytes %s, report %zu bytes %s", a.first.size(),
              same_snap ? "identical" : "differs", a.second.size(),
              same_report ? "identical" : "differs")};
}

}  // namespace

int main() {
  report(1, "gradient check suite", gradient_suite);
  report(2, "smooth coefficient limits and rank sum", smooth_limits);
  report(3, "exact metrics against brute force", exact_metrics);
  report(4, "four-parameter logistic fit", logistic_fit);
  report(5, "pair count laws", pair_counts);
  report(6, "pair formation ablation", pair_formation);
  report(7, "regularizer ablation", regularizers);
  report(8, "batch size ablation", batch_size);
  report(9, "2AFC identities", two_afc);
  report(10, "run determinism", determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
