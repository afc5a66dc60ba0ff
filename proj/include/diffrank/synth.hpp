#pragma once

// Synthetic content-sensitive quality benchmark.
//
// Every reference content has a unit-norm embedding. Its base quality and its
// per-distortion sensitivity are smooth functions of that embedding, so the
// same distortion at the same severity degrades different contents by
// different amounts, and a scorer can only predict that by learning the
// embedding-to-sensitivity association:
//
//   mos = clamp(base(e) - sensitivity_k(e) * 4 * level / S + noise, 1, 5)
//
// Features are [one-hot(type) * (level / S + noise), embedding].

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diffrank/errors.hpp"
#include "diffrank/pairs.hpp"

namespace diffrank::synth {

struct DatasetConfig {
  std::size_t n_contents = 60;
  std::size_t n_types = 5;        // K
  std::size_t n_severities = 5;   // S
  std::size_t embedding_dim = 8;  // d_c
  double feature_noise_sd = 0.02;
  double mos_noise_sd = 0.1;
  std::uint64_t seed = 2022;

  void validate() const {
    if (n_contents == 0 || n_types == 0 || n_severities == 0 ||
        embedding_dim == 0) {
      throw ConfigError("dataset sizes must be positive");
    }
    if (!(feature_noise_sd >= 0.0) || !(mos_noise_sd >= 0.0) ||
        !std::isfinite(feature_noise_sd) || !std::isfinite(mos_noise_sd)) {
      throw ConfigError("noise standard deviations must be nonnegative");
    }
  }
};

struct ContentSpec {
  std::int64_t content_id = 0;
  double base_quality = 0.0;          // in [3.5, 5.0]
  std::vector<double> sensitivity;    // per type, in [0.3, 1.7]
  std::vector<double> embedding;      // unit norm
};

struct Sample {
  std::int64_t content_id = 0;
  int distortion_type = 0;  // [0, K)
  int severity = 1;         // [1, S]
  double mos = 1.0;         // [1, 5]
  std::vector<double> features;

  bool operator==(const Sample&) const = default;
};

inline constexpr double kMosMin = 1.0;
inline constexpr double kMosMax = 5.0;
inline constexpr double kSeveritySpan = 4.0;

// Severity degradation scale: level / S mapped onto [0, 4].
inline double severity_curve(int level, std::size_t n_severities) {
  return kSeveritySpan * static_cast<double>(level) /
         static_cast<double>(n_severities);
}

namespace detail {

// Steepness of the embedding -> (base, sensitivity) maps.
inline constexpr double kGain = 2.5;

template <class Rng>
std::vector<double> unit_vector(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

inline std::vector<ContentSpec> generate_contents(const DatasetConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const std::size_t d = cfg.embedding_dim;

  const std::vector<double> base_dir = detail::unit_vector(d, rng);
  std::vector<std::vector<double>> type_dirs;
  for (std::size_t k = 0; k < cfg.n_types; ++k) {
    type_dirs.push_back(detail::unit_vector(d, rng));
  }

  std::vector<ContentSpec> contents;
  contents.reserve(cfg.n_contents);
  for (std::size_t c = 0; c < cfg.n_contents; ++c) {
    ContentSpec spec;
    spec.content_id = static_cast<std::int64_t>(c);
    spec.embedding = detail::unit_vector(d, rng);
    spec.base_quality =
        4.25 + 0.75 * std::tanh(detail::kGain * detail::dot(base_dir, spec.embedding));
    for (std::size_t k = 0; k < cfg.n_types; ++k) {
      spec.sensitivity.push_back(
          1.0 + 0.7 * std::tanh(detail::kGain *
                                detail::dot(type_dirs[k], spec.embedding)));
    }
    contents.push_back(std::move(spec));
  }
  return contents;
}

inline double clean_mos(const ContentSpec& c, int type, int level,
                        std::size_t n_severities) {
  return c.base_quality -
         c.sensitivity[static_cast<std::size_t>(type)] *
             severity_curve(level, n_severities);
}

// n_contents * K * S samples ordered by (content, type, level).
inline std::vector<Sample> generate_dataset(const DatasetConfig& cfg) {
  const std::vector<ContentSpec> contents = generate_contents(cfg);
  // Separate stream so content draws do not depend on the noise settings.
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t k_types = cfg.n_types;
  const std::size_t s_levels = cfg.n_severities;
  std::vector<Sample> out;
  out.reserve(contents.size() * k_types * s_levels);
  for (const ContentSpec& c : contents) {
    for (std::size_t k = 0; k < k_types; ++k) {
      for (std::size_t level = 1; level <= s_levels; ++level) {
        Sample s;
        s.content_id = c.content_id;
        s.distortion_type = static_cast<int>(k);
        s.severity = static_cast<int>(level);
        s.features.assign(k_types + cfg.embedding_dim, 0.0);
        const double feature_noise = cfg.feature_noise_sd * normal(rng);
        const double mos_noise = cfg.mos_noise_sd * normal(rng);
        s.features[k] = static_cast<double>(level) / static_cast<double>(s_levels) +
                        feature_noise;
        std::copy(c.embedding.begin(), c.embedding.end(),
                  s.features.begin() + static_cast<std::ptrdiff_t>(k_types));
        s.mos = std::clamp(clean_mos(c, s.distortion_type, s.severity, s_levels) +
                               mos_noise,
                           kMosMin, kMosMax);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

// Partitions contents (not samples) into train and test sets.
inline std::pair<std::vector<Sample>, std::vector<Sample>> split_by_content(
    std::span<const Sample> data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie strictly between 0 and 1");
  }
  std::set<std::int64_t> ids;
  for (const Sample& s : data) ids.insert(s.content_id);
  if (ids.size() < 2) {
    throw ConfigError("split_by_content: need at least 2 contents, have " +
                      std::to_string(ids.size()));
  }
  std::vector<std::int64_t> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto total = static_cast<long long>(order.size());
  const long long n_train = std::clamp(
      std::llround(train_fraction * static_cast<double>(total)), 1LL, total - 1);
  const std::set<std::int64_t> train_ids(order.begin(), order.begin() + n_train);

  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (const Sample& s : data) {
    (train_ids.count(s.content_id) ? out.first : out.second).push_back(s);
  }
  return out;
}

inline std::vector<pairs::SampleRef> to_refs(std::span<const Sample> data) {
  std::vector<pairs::SampleRef> refs;
  refs.reserve(data.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    refs.push_back({r, data[r].content_id, data[r].mos, r});
  }
  return refs;
}

// ---- CSV -------------------------------------------------------------------
//
// content_id,distortion_type,severity,mos,f_0,...,f_{m-1}
// UTF-8, LF line endings, shortest text that round-trips 17 significant digits.

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::span<const Sample> data, std::ostream& out) {
  const std::size_t m = data.empty() ? 0 : data.front().features.size();
  out << "content_id,distortion_type,severity,mos";
  for (std::size_t f = 0; f < m; ++f) out << ",f_" << f;
  out << '\n';
  for (const Sample& s : data) {
    if (s.features.size() != m) {
      throw ShapeError("write_csv: samples have differing feature lengths");
    }
    out << s.content_id << ',' << s.distortion_type << ',' << s.severity << ','
        << format_double(s.mos);
    for (double f : s.features) out << ',' << format_double(f);
    out << '\n';
  }
}

inline void write_csv(std::span<const Sample> data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_csv(data, out);
  if (!out) throw Error("failed writing '" + path + "'");
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <class T>
T parse_number(std::string_view text, const char* column, std::size_t line) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError("column '" + std::string(column) + "': cannot parse '" +
                         std::string(text) + "'",
                     line);
  }
  return value;
}

}  // namespace detail

inline std::vector<Sample> read_csv(std::istream& in) {
  static constexpr std::string_view kFixed[] = {"content_id", "distortion_type",
                                                "severity", "mos"};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file, header missing", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_fields(line);
  for (std::size_t c = 0; c < 4; ++c) {
    if (c >= header.size() || header[c] != kFixed[c]) {
      throw ParseError("header: missing column '" + std::string(kFixed[c]) +
                           "' at position " + std::to_string(c),
                       1);
    }
  }
  const std::size_t m = header.size() - 4;
  if (m == 0) throw ParseError("header: missing column 'f_0'", 1);
  for (std::size_t f = 0; f < m; ++f) {
    const std::string expected = "f_" + std::to_string(f);
    if (header[4 + f] != expected) {
      throw ParseError("header: missing column '" + expected + "' at position " +
                           std::to_string(4 + f),
                       1);
    }
  }

  std::vector<Sample> data;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    }
    Sample s;
    s.content_id = detail::parse_number<std::int64_t>(fields[0], "content_id", line_no);
    s.distortion_type = detail::parse_number<int>(fields[1], "distortion_type", line_no);
    s.severity = detail::parse_number<int>(fields[2], "severity", line_no);
    s.mos = detail::parse_number<double>(fields[3], "mos", line_no);
    if (s.distortion_type < 0) {
      throw ParseError("distortion_type must be nonnegative", line_no);
    }
    if (s.severity < 1) throw ParseError("severity must be at least 1", line_no);
    if (!(s.mos >= kMosMin && s.mos <= kMosMax)) {
      throw ParseError("mos " + std::string(fields[3]) + " outside [1, 5]", line_no);
    }
    s.features.reserve(m);
    for (std::size_t f = 0; f < m; ++f) {
      const double v = detail::parse_number<double>(fields[4 + f], "feature", line_no);
      if (!std::isfinite(v)) throw ParseError("non-finite feature value", line_no);
      s.features.push_back(v);
    }
    data.push_back(std::move(s));
  }
  return data;
}

inline std::vector<Sample> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_csv(in);
}

}  // namespace diffrank::synth
