#pragma once

// Mini-batch construction and pair formation.
//
//   fixed-similar  N/2 disjoint pairs, both members share a reference content
//   all-similar    every pair of a batch drawn from one content (N <= D)
//   all-differing  every pair of the batch, content unconstrained

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffrank/errors.hpp"

namespace diffrank::pairs {

enum class Strategy { fixed_similar, all_similar, all_differing };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::fixed_similar: return "fixed-similar";
    case Strategy::all_similar: return "all-similar";
    case Strategy::all_differing: return "all-differing";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  if (name == "fixed-similar") return Strategy::fixed_similar;
  if (name == "all-similar") return Strategy::all_similar;
  if (name == "all-differing") return Strategy::all_differing;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected fixed-similar, all-similar or all-differing)");
}

struct SampleRef {
  std::size_t index = 0;       // position in the mini-batch (or pool row)
  std::int64_t content_id = 0;
  double mos = 0.0;
  std::size_t source = 0;      // row in the pool the sample was drawn from
};

struct IndexPair {
  std::size_t i = 0;
  std::size_t j = 0;
  bool operator==(const IndexPair&) const = default;
};

struct PairSet {
  std::vector<IndexPair> pairs;
  Strategy strategy = Strategy::all_differing;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

namespace detail {

inline void require_batch(std::span<const SampleRef> batch, const char* what) {
  if (batch.size() < 2) {
    throw DomainError(std::string(what) + ": batch needs at least 2 samples");
  }
}

}  // namespace detail

// Greedy first-fit: each unmatched sample is paired with the next unmatched
// sample of the same content, in batch order.
inline PairSet fixed_pairs(std::span<const SampleRef> batch) {
  if (batch.size() % 2 != 0) {
    throw InfeasibleStrategyError("fixed-similar: batch size " +
                                  std::to_string(batch.size()) +
                                  " is odd, N must be even");
  }
  PairSet out{{}, Strategy::fixed_similar};
  std::vector<bool> used(batch.size(), false);
  for (std::size_t a = 0; a < batch.size(); ++a) {
    if (used[a]) continue;
    std::size_t b = a + 1;
    while (b < batch.size() &&
           (used[b] || batch[b].content_id != batch[a].content_id)) {
      ++b;
    }
    if (b == batch.size()) {
      throw InfeasibleStrategyError(
          "fixed-similar: sample at batch position " + std::to_string(a) +
          " (content " + std::to_string(batch[a].content_id) +
          ") has no unmatched partner with the same content");
    }
    used[a] = used[b] = true;
    out.pairs.push_back({batch[a].index, batch[b].index});
  }
  return out;
}

// Seeded variant: the order inside each content group is shuffled before the
// first-fit matching.
template <class Rng>
PairSet fixed_pairs_random(std::span<const SampleRef> batch, Rng& rng) {
  std::vector<SampleRef> shuffled(batch.begin(), batch.end());
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < shuffled.size(); ++k) {
    groups[shuffled[k].content_id].push_back(k);
  }
  for (auto& [content, slots] : groups) {
    std::vector<SampleRef> members;
    for (std::size_t k : slots) members.push_back(batch[k]);
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = 0; k < slots.size(); ++k) shuffled[slots[k]] = members[k];
  }
  return fixed_pairs(shuffled);
}

inline PairSet all_pairs_similar(std::span<const SampleRef> batch) {
  detail::require_batch(batch, "all-similar");
  PairSet out{{}, Strategy::all_similar};
  for (std::size_t a = 0; a < batch.size(); ++a) {
    for (std::size_t b = a + 1; b < batch.size(); ++b) {
      if (batch[a].content_id == batch[b].content_id) {
        out.pairs.push_back({batch[a].index, batch[b].index});
      }
    }
  }
  return out;
}

inline PairSet all_pairs_differing(std::span<const SampleRef> batch) {
  detail::require_batch(batch, "all-differing");
  PairSet out{{}, Strategy::all_differing};
  out.pairs.reserve(batch.size() * (batch.size() - 1) / 2);
  for (std::size_t a = 0; a < batch.size(); ++a) {
    for (std::size_t b = a + 1; b < batch.size(); ++b) {
      out.pairs.push_back({batch[a].index, batch[b].index});
    }
  }
  return out;
}

inline PairSet form_pairs(std::span<const SampleRef> batch, Strategy s) {
  switch (s) {
    case Strategy::fixed_similar: return fixed_pairs(batch);
    case Strategy::all_similar: return all_pairs_similar(batch);
    case Strategy::all_differing: return all_pairs_differing(batch);
  }
  throw ConfigError("unknown strategy");
}

// Draws a mini-batch of `n` distinct pool rows satisfying the strategy's
// structural constraint. Returned refs carry their batch position in `index`
// and their pool row in `source`.
template <class Rng>
std::vector<SampleRef> make_minibatch(std::span<const SampleRef> pool,
                                      Strategy strategy, std::size_t n,
                                      Rng& rng) {
  if (n < 2) {
    throw InfeasibleStrategyError("batch size must be at least 2, got " +
                                  std::to_string(n));
  }
  std::map<std::int64_t, std::vector<std::size_t>> by_content;
  for (std::size_t r = 0; r < pool.size(); ++r) {
    by_content[pool[r].content_id].push_back(r);
  }

  std::vector<std::size_t> rows;
  rows.reserve(n);

  switch (strategy) {
    case Strategy::all_differing: {
      if (n > pool.size()) {
        throw InfeasibleStrategyError(
            "all-differing: batch size N=" + std::to_string(n) +
            " exceeds the pool size " + std::to_string(pool.size()));
      }
      std::vector<std::size_t> all(pool.size());
      for (std::size_t r = 0; r < all.size(); ++r) all[r] = r;
      for (std::size_t k = 0; k < n; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, all.size() - 1);
        std::swap(all[k], all[pick(rng)]);
        rows.push_back(all[k]);
      }
      break;
    }

    case Strategy::all_similar: {
      std::size_t largest = 0;
      std::vector<const std::vector<std::size_t>*> eligible;
      for (const auto& [content, members] : by_content) {
        largest = std::max(largest, members.size());
        if (members.size() >= n) eligible.push_back(&members);
      }
      if (eligible.empty()) {
        throw InfeasibleStrategyError(
            "all-similar: batch size N=" + std::to_string(n) +
            " exceeds D=" + std::to_string(largest) +
            ", the most samples any single content provides (N <= D required)");
      }
      std::uniform_int_distribution<std::size_t> pick_content(
          0, eligible.size() - 1);
      std::vector<std::size_t> members = *eligible[pick_content(rng)];
      for (std::size_t k = 0; k < n; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, members.size() - 1);
        std::swap(members[k], members[pick(rng)]);
        rows.push_back(members[k]);
      }
      break;
    }

    case Strategy::fixed_similar: {
      if (n % 2 != 0) {
        throw InfeasibleStrategyError("fixed-similar: batch size N=" +
                                      std::to_string(n) + " must be even");
      }
      std::size_t available = 0;
      std::vector<std::vector<std::size_t>> remaining;
      for (const auto& [content, members] : by_content) {
        available += members.size() / 2;
        remaining.push_back(members);
      }
      if (available < n / 2) {
        throw InfeasibleStrategyError(
            "fixed-similar: N/2=" + std::to_string(n / 2) +
            " same-content pairs requested but the pool only holds " +
            std::to_string(available));
      }
      for (std::size_t p = 0; p < n / 2; ++p) {
        std::vector<std::size_t> open;
        for (std::size_t c = 0; c < remaining.size(); ++c) {
          if (remaining[c].size() >= 2) open.push_back(c);
        }
        std::uniform_int_distribution<std::size_t> pick_content(0,
                                                                open.size() - 1);
        auto& members = remaining[open[pick_content(rng)]];
        for (int take = 0; take < 2; ++take) {
          std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
          const std::size_t k = pick(rng);
          rows.push_back(members[k]);
          members.erase(members.begin() + static_cast<std::ptrdiff_t>(k));
        }
      }
      break;
    }
  }

  std::vector<SampleRef> batch;
  batch.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const SampleRef& src = pool[rows[k]];
    batch.push_back({k, src.content_id, src.mos, rows[k]});
  }
  return batch;
}

}  // namespace diffrank::pairs
