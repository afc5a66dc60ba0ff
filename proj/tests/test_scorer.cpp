#include <cmath>
#include <cstring>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "diffrank/scorer.hpp"

namespace {

using namespace diffrank;
using scorer::MlpScorer;

std::vector<double> random_features(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal;
  std::vector<double> f(n);
  for (double& v : f) v = normal(rng);
  return f;
}

TEST(Init, CountAndDeterminism) {
  const std::vector<std::size_t> w{21, 32, 32, 1};
  EXPECT_EQ(MlpScorer::count_parameters(w), 21u * 32 + 32 + 32 * 32 + 32 + 32 + 1);
  EXPECT_EQ(MlpScorer::count_parameters(w), 1793u);
  const auto a = MlpScorer::init(w, 7);
  const auto b = MlpScorer::init(w, 7);
  EXPECT_EQ(a.parameter_count(), 1793u);
  EXPECT_EQ(std::memcmp(a.parameters().data(), b.parameters().data(), 1793 * sizeof(double)), 0);
  EXPECT_FALSE(MlpScorer::init(w, 8) == a);
  // Biases start at zero.
  for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(a.parameters()[a.bias_offset(0) + k], 0.0);
}

TEST(Init, InvalidWidths) {
  EXPECT_THROW(MlpScorer::init({21, 32, 2}, 0), ConfigError);
  EXPECT_THROW(MlpScorer::init({21}, 0), ConfigError);
  EXPECT_THROW(MlpScorer::init({21, 0, 1}, 0), ConfigError);
}

TEST(Score, ZeroWeightsGiveFinalBias) {
  auto m = MlpScorer::init({4, 3, 1}, 1);
  for (double& p : m.parameters()) p = 0.0;
  m.parameters()[m.bias_offset(1)] = 0.625;
  grad::Tape tape;
  const auto bound = m.bind(tape);
  EXPECT_EQ(m.score(bound, std::vector<double>{1, 2, 3, 4}).item(), 0.625);
  EXPECT_EQ(m.predict(std::vector<double>{1, 2, 3, 4}), 0.625);
}

TEST(Score, PredictMatchesTapeBitwise) {
  std::mt19937_64 rng(2);
  const auto m = MlpScorer::init({13, 32, 32, 1}, 3);
  for (int k = 0; k < 20; ++k) {
    const auto f = random_features(rng, 13);
    grad::Tape tape;
    const auto bound = m.bind(tape);
    const double a = m.score(bound, f).item();
    const double b = m.predict(f);
    EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
    EXPECT_EQ(m.predict(f), b);
  }
  EXPECT_THROW(m.predict(std::vector<double>(12, 0.0)), ShapeError);
}

// Gradients from the scorer's own bind/score path agree with central
// differences of predict().
TEST(Score, BoundGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = MlpScorer::init({5, 4, 3, 1}, 9 + trial);
    for (double& p : m.parameters()) p += 0.3 * random_features(rng, 1)[0];
    const auto feat = random_features(rng, 5);
    grad::Tape tape;
    const auto bound = m.bind(tape);
    const auto g = m.flatten(tape.backward(m.score(bound, feat)), bound);
    ASSERT_EQ(g.size(), m.parameter_count());
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      MlpScorer up = m, down = m;
      up.parameters()[k] += h;
      down.parameters()[k] -= h;
      const double numeric = (up.predict(feat) - down.predict(feat)) / (2 * h);
      worst = std::max(worst, std::fabs(numeric - g[k]) / std::max(1.0, std::fabs(g[k])));
    }
    EXPECT_LT(worst, 1e-5);
  }
}

TEST(Snapshot, RoundTripAndLayout) {
  const auto m = MlpScorer::init({3, 2, 1}, 0x0102030405060708ULL, scorer::Activation::relu);
  std::stringstream buf;
  m.save(buf);
  const std::string bytes = buf.str();
  const std::size_t p = m.parameter_count();
  ASSERT_EQ(bytes.size(), 8 + 4 + 3 * 4 + 4 + 8 + 8 + 8 * p);
  EXPECT_EQ(bytes.substr(0, 8), "DRMLP001");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(static_cast<unsigned char>(bytes[at + k])) << (8 * k);
    return v;
  };
  EXPECT_EQ(u32(8), 3u);
  EXPECT_EQ(u32(12), 3u);
  EXPECT_EQ(u32(16), 2u);
  EXPECT_EQ(u32(20), 1u);
  EXPECT_EQ(u32(24), 1u);  // relu tag
  EXPECT_EQ(static_cast<unsigned char>(bytes[28]), 0x08);
  EXPECT_EQ(static_cast<unsigned char>(bytes[35]), 0x01);
  EXPECT_EQ(u32(36), p);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 44, 8);  // little-endian host
  EXPECT_EQ(first, m.parameters()[0]);

  const auto back = MlpScorer::load(buf);
  EXPECT_TRUE(back == m);
}

TEST(Snapshot, RejectsCorruptInput) {
  const auto m = MlpScorer::init({3, 2, 1}, 1);
  std::stringstream buf;
  m.save(buf);
  std::string bytes = buf.str();
  {
    std::istringstream in(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(MlpScorer::load(in), ParseError);
  }
  {
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream in(bad);
    EXPECT_THROW(MlpScorer::load(in), ParseError);
  }
}

}  // namespace
