#pragma once

// Small multilayer perceptron producing one unbounded quality score per
// feature vector.
//
// Parameters are stored flat, layer by layer: W_l (out x in, row-major) then
// b_l (out). The same order is used by gradients, the optimizer and the
// snapshot file.
//
// Snapshot layout (all integers and doubles little-endian):
//
//   offset  size      field
//   0       8         magic "DRMLP001"
//   8       4         u32 number of widths L
//   12      4*L       u32 widths (input ... output, output == 1)
//   ..      4         u32 activation tag (0 = tanh, 1 = relu)
//   ..      8         u64 init seed
//   ..      8         u64 parameter count P
//   ..      8*P       f64 parameters (IEEE 754 binary64)

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "diffrank/errors.hpp"
#include "diffrank/grad.hpp"

namespace diffrank::scorer {

using grad::Tape;
using grad::Value;

enum class Activation : std::uint32_t { tanh = 0, relu = 1 };

inline constexpr std::array<char, 8> kSnapshotMagic = {'D', 'R', 'M', 'L',
                                                       'P', '0', '0', '1'};

class MlpScorer {
 public:
  // Trainable leaves of one model on one tape.
  struct Bound {
    std::vector<Value> weights;
    std::vector<Value> biases;
  };

  MlpScorer() = default;

  static MlpScorer init(std::vector<std::size_t> widths, std::uint64_t seed,
                        Activation activation = Activation::tanh) {
    validate_widths(widths);
    MlpScorer m;
    m.widths_ = std::move(widths);
    m.activation_ = activation;
    m.seed_ = seed;
    m.params_.assign(count_parameters(m.widths_), 0.0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < m.widths_.size(); ++l) {
      const std::size_t in = m.widths_[l];
      const std::size_t out = m.widths_[l + 1];
      const double scale = 1.0 / std::sqrt(static_cast<double>(in));
      for (std::size_t k = 0; k < in * out; ++k) {
        m.params_[offset + k] = scale * normal(rng);
      }
      offset += in * out + out;  // biases start at zero
    }
    return m;
  }

  static std::size_t count_parameters(std::span<const std::size_t> widths) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      n += widths[l] * widths[l + 1] + widths[l + 1];
    }
    return n;
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  // Offset of layer l's bias block inside the flat parameter vector.
  std::size_t bias_offset(std::size_t layer) const {
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layer; ++l) {
      offset += widths_[l] * widths_[l + 1] + widths_[l + 1];
    }
    return offset + widths_[layer] * widths_[layer + 1];
  }

  Bound bind(Tape& tape) const {
    Bound b;
    std::size_t offset = 0;
    const std::span<const double> p = params_;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      b.weights.push_back(tape.lift_matrix(p.subspan(offset, in * out), out, in, true));
      offset += in * out;
      b.biases.push_back(tape.lift(p.subspan(offset, out), true));
      offset += out;
    }
    return b;
  }

  // Forward pass on the tape; returns a scalar node.
  Value score(const Bound& bound, std::span<const double> features) const {
    check_features(features);
    Tape& tape = bound.weights.front().tape();
    Value x = tape.lift(features);
    const std::size_t layers = bound.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
      x = grad::matvec(bound.weights[l], x) + bound.biases[l];
      if (l + 1 < layers) {
        x = activation_ == Activation::tanh ? grad::tanh(x) : grad::relu(x);
      }
    }
    return grad::sum(x);
  }

  // Plain forward pass; bitwise equal to score().item().
  double predict(std::span<const double> features) const {
    check_features(features);
    std::vector<double> x(features.begin(), features.end());
    std::vector<double> y;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      const std::size_t in = widths_[l];
      const std::size_t out = widths_[l + 1];
      const double* w = params_.data() + offset;
      const double* bias = w + in * out;
      y.assign(out, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < in; ++c) s += w[r * in + c] * x[c];
        y[r] = s + bias[r];
      }
      if (l + 2 < widths_.size()) {
        for (double& v : y) {
          v = activation_ == Activation::tanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
        }
      }
      x.swap(y);
      offset += in * out + out;
    }
    return 0.0 + x[0];
  }

  // Gradient of a backward pass, flattened in parameter order.
  std::vector<double> flatten(const grad::GradientMap& grads,
                              const Bound& bound) const {
    std::vector<double> g;
    g.reserve(params_.size());
    for (std::size_t l = 0; l < bound.weights.size(); ++l) {
      auto gw = grads[bound.weights[l]];
      auto gb = grads[bound.biases[l]];
      g.insert(g.end(), gw.begin(), gw.end());
      g.insert(g.end(), gb.begin(), gb.end());
    }
    return g;
  }

  // ---- snapshot I/O --------------------------------------------------------

  void save(std::ostream& out) const {
    out.write(kSnapshotMagic.data(), kSnapshotMagic.size());
    put_u32(out, static_cast<std::uint32_t>(widths_.size()));
    for (std::size_t w : widths_) put_u32(out, static_cast<std::uint32_t>(w));
    put_u32(out, static_cast<std::uint32_t>(activation_));
    put_u64(out, seed_);
    put_u64(out, params_.size());
    for (double v : params_) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    save(out);
    if (!out) throw Error("failed writing '" + path + "'");
  }

  static MlpScorer load(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kSnapshotMagic) {
      throw ParseError("not a scorer snapshot (bad magic)", 0);
    }
    MlpScorer m;
    const std::uint32_t n_widths = get_u32(in);
    if (n_widths < 2 || n_widths > 64) throw ParseError("snapshot: bad layer count", 0);
    for (std::uint32_t k = 0; k < n_widths; ++k) m.widths_.push_back(get_u32(in));
    validate_widths(m.widths_);
    const std::uint32_t act = get_u32(in);
    if (act > 1) throw ParseError("snapshot: unknown activation tag", 0);
    m.activation_ = static_cast<Activation>(act);
    m.seed_ = get_u64(in);
    const std::uint64_t count = get_u64(in);
    if (count != count_parameters(m.widths_)) {
      throw ParseError("snapshot: parameter count does not match widths", 0);
    }
    m.params_.resize(count);
    for (double& v : m.params_) v = std::bit_cast<double>(get_u64(in));
    return m;
  }

  static MlpScorer load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return load(in);
  }

  bool operator==(const MlpScorer&) const = default;

 private:
  static void validate_widths(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw ConfigError("scorer needs at least two widths");
    for (std::size_t w : widths) {
      if (w == 0) throw ConfigError("scorer widths must be positive");
    }
    if (widths.back() != 1) {
      throw ConfigError("scorer output width must be 1, got " +
                        std::to_string(widths.back()));
    }
  }

  void check_features(std::span<const double> features) const {
    if (features.size() != widths_.front()) {
      throw ShapeError("scorer expects " + std::to_string(widths_.front()) +
                       " features, got " + std::to_string(features.size()));
    }
  }

  static void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(b, 4);
  }
  static void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(b, 8);
  }
  static std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("snapshot truncated", 0);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
    return v;
  }
  static std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ParseError("snapshot truncated", 0);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    return v;
  }

  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::tanh;
  std::uint64_t seed_ = 0;
  std::vector<double> params_;
};

}  // namespace diffrank::scorer
