#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "diffrank/synth.hpp"

namespace {

using namespace diffrank;
using synth::DatasetConfig;
using synth::Sample;

TEST(Contents, Invariants) {
  DatasetConfig cfg;
  const auto contents = synth::generate_contents(cfg);
  ASSERT_EQ(contents.size(), 60u);
  for (const auto& c : contents) {
    EXPECT_GE(c.base_quality, 3.5);
    EXPECT_LE(c.base_quality, 5.0);
    ASSERT_EQ(c.sensitivity.size(), cfg.n_types);
    for (double s : c.sensitivity) {
      EXPECT_GE(s, 0.3);
      EXPECT_LE(s, 1.7);
    }
    double norm = 0.0;
    for (double e : c.embedding) norm += e * e;
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-9);
  }
}

TEST(Dataset, ShapeAndRanges) {
  DatasetConfig cfg;
  const auto data = synth::generate_dataset(cfg);
  ASSERT_EQ(data.size(), 1500u);
  for (const auto& s : data) {
    EXPECT_EQ(s.features.size(), cfg.n_types + cfg.embedding_dim);
    EXPECT_GE(s.mos, 1.0);
    EXPECT_LE(s.mos, 5.0);
    EXPECT_GE(s.severity, 1);
    EXPECT_LE(s.severity, 5);
    EXPECT_GE(s.distortion_type, 0);
    EXPECT_LT(s.distortion_type, 5);
  }
}

TEST(Dataset, ContentEffectFromSensitivity) {
  // Same type and level, sensitivities at the two extremes, equal base.
  synth::ContentSpec low{0, 4.5, {0.3}, {1.0}};
  synth::ContentSpec high{1, 4.5, {1.7}, {1.0}};
  const double a = synth::clean_mos(low, 0, 5, 5);
  const double b = synth::clean_mos(high, 0, 5, 5);
  EXPECT_GE(std::clamp(a, 1.0, 5.0) - std::clamp(b, 1.0, 5.0), 1.0);
  EXPECT_NEAR(a - b, 1.4 * 4.0, 1e-12);
  EXPECT_GT(synth::severity_curve(1, 5), 0.0);
  EXPECT_EQ(synth::severity_curve(5, 5), 4.0);
}

TEST(Dataset, Deterministic) {
  DatasetConfig cfg;
  std::ostringstream a, b;
  synth::write_csv(synth::generate_dataset(cfg), a);
  synth::write_csv(synth::generate_dataset(cfg), b);
  EXPECT_EQ(a.str(), b.str());
  cfg.seed += 1;
  std::ostringstream c;
  synth::write_csv(synth::generate_dataset(cfg), c);
  EXPECT_NE(a.str(), c.str());
}

// Share of MOS variance left after subtracting the (type, level) group means.
TEST(Dataset, ContentLeavesResidualVariance) {
  const auto data = synth::generate_dataset(DatasetConfig{});
  std::map<std::pair<int, int>, std::pair<double, int>> groups;
  double mean = 0.0;
  for (const auto& s : data) {
    auto& g = groups[{s.distortion_type, s.severity}];
    g.first += s.mos;
    g.second += 1;
    mean += s.mos;
  }
  mean /= static_cast<double>(data.size());
  double total = 0.0, residual = 0.0;
  for (const auto& s : data) {
    const auto& g = groups[{s.distortion_type, s.severity}];
    const double gm = g.first / g.second;
    total += (s.mos - mean) * (s.mos - mean);
    residual += (s.mos - gm) * (s.mos - gm);
  }
  EXPECT_GE(residual / total, 0.20) << "residual share " << residual / total;
}

TEST(Dataset, MonotoneInSeverityWithoutNoise) {
  DatasetConfig cfg;
  cfg.mos_noise_sd = 0.0;
  const auto data = synth::generate_dataset(cfg);
  std::map<std::pair<std::int64_t, int>, std::map<int, double>> curves;
  for (const auto& s : data) curves[{s.content_id, s.distortion_type}][s.severity] = s.mos;
  for (const auto& [key, curve] : curves) {
    double prev = 6.0;
    for (const auto& [level, mos] : curve) {
      EXPECT_LE(mos, prev);
      prev = mos;
    }
  }
}

TEST(Dataset, NoiselessMosIsAFunctionOfFeatures) {
  DatasetConfig cfg;
  cfg.mos_noise_sd = 0.0;
  cfg.feature_noise_sd = 0.0;
  const auto data = synth::generate_dataset(cfg);
  std::map<std::vector<double>, double> seen;
  for (const auto& s : data) {
    auto [it, inserted] = seen.emplace(s.features, s.mos);
    if (!inserted) {
      EXPECT_EQ(it->second, s.mos);
    }
  }
  EXPECT_EQ(seen.size(), data.size());
}

TEST(Split, ByContent) {
  const auto data = synth::generate_dataset(DatasetConfig{});
  const auto [train, test] = synth::split_by_content(data, 0.7, 7);
  std::set<std::int64_t> a, b;
  for (const auto& s : train) a.insert(s.content_id);
  for (const auto& s : test) b.insert(s.content_id);
  EXPECT_EQ(a.size(), 42u);
  EXPECT_EQ(b.size(), 18u);
  for (auto id : a) EXPECT_EQ(b.count(id), 0u);
  EXPECT_EQ(train.size() + test.size(), data.size());
  const auto again = synth::split_by_content(data, 0.7, 7);
  EXPECT_EQ(again.first, train);
  EXPECT_EQ(again.second, test);

  std::vector<Sample> one(data.begin(), data.begin() + 25);
  EXPECT_THROW(synth::split_by_content(one, 0.7, 7), ConfigError);
  EXPECT_THROW(synth::split_by_content(data, 1.0, 7), ConfigError);
}

TEST(Csv, RoundTrip) {
  const auto data = synth::generate_dataset(DatasetConfig{});
  std::stringstream buf;
  synth::write_csv(data, buf);
  EXPECT_EQ(synth::read_csv(buf), data);
  const std::string text = buf.str();
  EXPECT_EQ(text.rfind("content_id,distortion_type,severity,mos,f_0,", 0), 0u);
  EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST(Csv, Errors) {
  {
    std::istringstream in("content_id,distortion_type,severity,mos,f_0\n0,0,1,7,0.5\n");
    try {
      synth::read_csv(in);
      FAIL();
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), 2u);
      EXPECT_NE(std::string(e.what()).find("outside"), std::string::npos);
    }
  }
  {
    std::istringstream in("content_id,distortion_type,severity,score,f_0\n");
    try {
      synth::read_csv(in);
      FAIL();
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find("'mos'"), std::string::npos);
    }
  }
  {
    std::istringstream in("content_id,distortion_type,severity,mos,f_0\n0,0,1,3.0\n");
    EXPECT_THROW(synth::read_csv(in), ParseError);
  }
  {
    std::istringstream in("content_id,distortion_type,severity,mos,f_0\r\n1,2,3,4.5,0.25\r\n");
    const auto d = synth::read_csv(in);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].features[0], 0.25);
  }
}

TEST(Config, Validation) {
  DatasetConfig cfg;
  cfg.n_types = 0;
  EXPECT_THROW(synth::generate_dataset(cfg), ConfigError);
  cfg = {};
  cfg.mos_noise_sd = -1;
  EXPECT_THROW(synth::generate_dataset(cfg), ConfigError);
}

}  // namespace
