#pragma once

// Reverse-mode automatic differentiation over scalars, dense vectors and
// row-major matrices.
//
// A Tape owns every node created while building an expression. Nodes are
// appended in creation order, so node ids are already a topological order and
// backward() is a single reverse sweep over the id range. Values are cheap
// handles (tape pointer + node id); they stay valid as long as the tape lives.
//
// Broadcasting is limited to scalar-with-anything for elementwise binary ops.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diffrank/errors.hpp"

namespace diffrank::grad {

using NodeId = std::size_t;

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  log,
  tanh,
  sigmoid,
  log_sigmoid,
  abs,
  pow,
  sum,
  mean,
  dot,
  matvec,
  relu,
  gather,
  scatter_add,
  stack,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::log_sigmoid: return "log_sigmoid";
    case Op::abs: return "abs";
    case Op::pow: return "pow";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::dot: return "dot";
    case Op::matvec: return "matvec";
    case Op::relu: return "relu";
    case Op::gather: return "gather";
    case Op::scatter_add: return "scatter_add";
    case Op::stack: return "stack";
  }
  return "?";
}

enum class Rank : std::uint8_t { scalar, vector, matrix };

struct Shape {
  Rank rank = Rank::scalar;
  std::size_t rows = 1;
  std::size_t cols = 1;

  static constexpr Shape scalar() { return {}; }
  static constexpr Shape vector(std::size_t n) { return {Rank::vector, n, 1}; }
  static constexpr Shape matrix(std::size_t r, std::size_t c) {
    return {Rank::matrix, r, c};
  }

  constexpr std::size_t size() const { return rows * cols; }
  constexpr bool is_scalar() const { return rank == Rank::scalar; }
  constexpr bool is_vector() const { return rank == Rank::vector; }
  constexpr bool is_matrix() const { return rank == Rank::matrix; }

  constexpr bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  switch (s.rank) {
    case Rank::scalar: return "scalar";
    case Rank::vector: return "vector[" + std::to_string(s.rows) + "]";
    case Rank::matrix:
      return "matrix[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) +
             "]";
  }
  return "?";
}

class Tape;

class Value {
 public:
  Value() = default;

  bool valid() const { return tape_ != nullptr; }
  NodeId id() const { return id_; }
  Tape& tape() const { return *tape_; }

  inline const Shape& shape() const;
  inline Op op() const;
  inline std::span<const double> payload() const;
  std::size_t size() const { return shape().size(); }

  // Payload of a scalar node.
  inline double item() const;
  double at(std::size_t i) const { return payload()[i]; }

 private:
  friend class Tape;
  Value(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

// Adjoints of the trainable leaves of one tape w.r.t. a scalar output.
class GradientMap {
 public:
  bool contains(const Value& v) const { return entries_.count(v.id()) != 0; }

  std::span<const double> operator[](const Value& v) const {
    auto it = entries_.find(v.id());
    if (it == entries_.end()) {
      throw Error("no gradient recorded for node " + std::to_string(v.id()));
    }
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }

 private:
  friend class Tape;
  std::map<NodeId, std::vector<double>> entries_;
};

class Tape {
 public:
  struct Node {
    Op op = Op::leaf;
    Shape shape;
    std::vector<double> value;
    std::vector<NodeId> parents;
    std::vector<std::size_t> index;  // gather / scatter_add positions
    double aux = 0.0;                // pow exponent
    bool trainable = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value lift(double x, bool trainable = false) {
    return leaf(Shape::scalar(), std::vector<double>{x}, trainable);
  }

  Value lift(std::span<const double> xs, bool trainable = false) {
    return leaf(Shape::vector(xs.size()),
                std::vector<double>(xs.begin(), xs.end()), trainable);
  }

  Value lift(std::initializer_list<double> xs, bool trainable = false) {
    return lift(std::span<const double>(xs.begin(), xs.size()), trainable);
  }

  Value lift_matrix(std::span<const double> xs, std::size_t rows,
                    std::size_t cols, bool trainable = false) {
    if (xs.size() != rows * cols) {
      throw ShapeError("lift_matrix: payload has " + std::to_string(xs.size()) +
                       " entries, expected " + std::to_string(rows * cols));
    }
    return leaf(Shape::matrix(rows, cols),
                std::vector<double>(xs.begin(), xs.end()), trainable);
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }

  // Appends a computed node. Primitives go through here; the forward payload
  // must already be evaluated.
  Value record(Op op, Shape shape, std::vector<double> value,
               std::vector<NodeId> parents, double aux = 0.0,
               std::vector<std::size_t> index = {}) {
    for (double v : value) {
      if (!std::isfinite(v)) {
        throw DomainError(std::string(op_name(op)) +
                          ": forward evaluation produced a non-finite value");
      }
    }
    nodes_.push_back(Node{op, shape, std::move(value), std::move(parents),
                          std::move(index), aux, false});
    return Value(this, nodes_.size() - 1);
  }

  inline GradientMap backward(const Value& output) const;

 private:
  Value leaf(Shape shape, std::vector<double> value, bool trainable) {
    for (double v : value) {
      if (!std::isfinite(v)) throw DomainError("lift: non-finite input");
    }
    nodes_.push_back(
        Node{Op::leaf, shape, std::move(value), {}, {}, 0.0, trainable});
    return Value(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Shape& Value::shape() const { return tape_->node(id_).shape; }
inline Op Value::op() const { return tape_->node(id_).op; }
inline std::span<const double> Value::payload() const {
  return tape_->node(id_).value;
}
inline double Value::item() const {
  if (!shape().is_scalar()) {
    throw ShapeError("item() on non-scalar " + to_string(shape()));
  }
  return payload()[0];
}

namespace detail {

inline Tape& same_tape(const Value& a, const Value& b) {
  if (!a.valid() || !b.valid()) throw Error("operation on an empty Value");
  if (&a.tape() != &b.tape()) throw Error("operands live on different tapes");
  return a.tape();
}

inline Shape broadcast(const Shape& a, const Shape& b, const char* what) {
  if (a == b) return a;
  if (a.is_scalar()) return b;
  if (b.is_scalar()) return a;
  throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) +
                   " vs " + to_string(b));
}

template <class F>
Value binary(Op op, const Value& a, const Value& b, F f) {
  Tape& tape = same_tape(a, b);
  Shape out = broadcast(a.shape(), b.shape(), op_name(op));
  auto av = a.payload();
  auto bv = b.payload();
  const bool sa = av.size() == 1;
  const bool sb = bv.size() == 1;
  std::vector<double> v(out.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    v[k] = f(av[sa ? 0 : k], bv[sb ? 0 : k]);
  }
  return tape.record(op, out, std::move(v), {a.id(), b.id()});
}

template <class F>
Value unary(Op op, const Value& a, F f, double aux = 0.0) {
  if (!a.valid()) throw Error("operation on an empty Value");
  auto av = a.payload();
  std::vector<double> v(av.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(av[k]);
  return a.tape().record(op, a.shape(), std::move(v), {a.id()}, aux);
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without cancellation or underflow.
inline double stable_log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace detail

// ---- elementwise binary ----------------------------------------------------

inline Value add(const Value& a, const Value& b) {
  return detail::binary(Op::add, a, b, [](double x, double y) { return x + y; });
}
inline Value sub(const Value& a, const Value& b) {
  return detail::binary(Op::sub, a, b, [](double x, double y) { return x - y; });
}
inline Value mul(const Value& a, const Value& b) {
  return detail::binary(Op::mul, a, b, [](double x, double y) { return x * y; });
}
inline Value div(const Value& a, const Value& b) {
  for (double d : b.payload()) {
    if (d == 0.0) throw DomainError("div: zero denominator");
  }
  return detail::binary(Op::div, a, b, [](double x, double y) { return x / y; });
}

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }
inline Value operator/(const Value& a, const Value& b) { return div(a, b); }

inline Value operator+(const Value& a, double c) { return add(a, a.tape().lift(c)); }
inline Value operator+(double c, const Value& a) { return add(a.tape().lift(c), a); }
inline Value operator-(const Value& a, double c) { return sub(a, a.tape().lift(c)); }
inline Value operator-(double c, const Value& a) { return sub(a.tape().lift(c), a); }
inline Value operator*(const Value& a, double c) { return mul(a, a.tape().lift(c)); }
inline Value operator*(double c, const Value& a) { return mul(a.tape().lift(c), a); }
inline Value operator/(const Value& a, double c) { return div(a, a.tape().lift(c)); }
inline Value operator/(double c, const Value& a) { return div(a.tape().lift(c), a); }

// ---- elementwise unary -----------------------------------------------------

inline Value neg(const Value& a) {
  return detail::unary(Op::neg, a, [](double x) { return -x; });
}
inline Value operator-(const Value& a) { return neg(a); }

inline Value exp(const Value& a) {
  return detail::unary(Op::exp, a, [](double x) { return std::exp(x); });
}

inline Value log(const Value& a) {
  for (double x : a.payload()) {
    if (!(x > 0.0)) throw DomainError("log: argument must be positive");
  }
  return detail::unary(Op::log, a, [](double x) { return std::log(x); });
}

inline Value tanh(const Value& a) {
  return detail::unary(Op::tanh, a, [](double x) { return std::tanh(x); });
}

inline Value sigmoid(const Value& a) {
  return detail::unary(Op::sigmoid, a, detail::stable_sigmoid);
}

inline Value log_sigmoid(const Value& a) {
  return detail::unary(Op::log_sigmoid, a, detail::stable_log_sigmoid);
}

inline Value abs(const Value& a) {
  return detail::unary(Op::abs, a, [](double x) { return std::fabs(x); });
}

inline Value relu(const Value& a) {
  return detail::unary(Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

// Elementwise power with a constant exponent.
inline Value pow(const Value& a, double p) {
  const bool integral = std::floor(p) == p;
  for (double x : a.payload()) {
    if (x < 0.0 && !integral) {
      throw DomainError("pow: negative base with non-integer exponent");
    }
    if (x == 0.0 && p < 1.0) {
      throw DomainError("pow: zero base with exponent below 1");
    }
  }
  return detail::unary(Op::pow, a, [p](double x) { return std::pow(x, p); }, p);
}

// ---- reductions and linear algebra ----------------------------------------

inline Value sum(const Value& a) {
  double s = 0.0;
  for (double x : a.payload()) s += x;
  return a.tape().record(Op::sum, Shape::scalar(), {s}, {a.id()});
}

inline Value mean(const Value& a) {
  double s = 0.0;
  for (double x : a.payload()) s += x;
  return a.tape().record(Op::mean, Shape::scalar(),
                         {s / static_cast<double>(a.size())}, {a.id()});
}

inline Value dot(const Value& a, const Value& b) {
  Tape& tape = detail::same_tape(a, b);
  if (!a.shape().is_vector() || a.shape() != b.shape()) {
    throw ShapeError("dot: expects equal-length vectors, got " +
                     to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  auto av = a.payload();
  auto bv = b.payload();
  double s = 0.0;
  for (std::size_t k = 0; k < av.size(); ++k) s += av[k] * bv[k];
  return tape.record(Op::dot, Shape::scalar(), {s}, {a.id(), b.id()});
}

// Row-major matrix [r x c] times vector [c].
inline Value matvec(const Value& w, const Value& x) {
  Tape& tape = detail::same_tape(w, x);
  const Shape& ws = w.shape();
  if (!ws.is_matrix() || !x.shape().is_vector() || ws.cols != x.size()) {
    throw ShapeError("matvec: cannot multiply " + to_string(ws) + " by " +
                     to_string(x.shape()));
  }
  auto wv = w.payload();
  auto xv = x.payload();
  std::vector<double> out(ws.rows, 0.0);
  for (std::size_t i = 0; i < ws.rows; ++i) {
    double s = 0.0;
    const double* row = wv.data() + i * ws.cols;
    for (std::size_t j = 0; j < ws.cols; ++j) s += row[j] * xv[j];
    out[i] = s;
  }
  return tape.record(Op::matvec, Shape::vector(ws.rows), std::move(out),
                     {w.id(), x.id()});
}

// out[k] = a[index[k]]
inline Value gather(const Value& a, std::span<const std::size_t> index) {
  auto av = a.payload();
  std::vector<double> out(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= av.size()) throw ShapeError("gather: index out of range");
    out[k] = av[index[k]];
  }
  return a.tape().record(Op::gather, Shape::vector(index.size()),
                         std::move(out), {a.id()}, 0.0,
                         std::vector<std::size_t>(index.begin(), index.end()));
}

// Scalar element i of a vector.
inline Value element(const Value& a, std::size_t i) {
  auto av = a.payload();
  if (i >= av.size()) throw ShapeError("element: index out of range");
  return a.tape().record(Op::gather, Shape::scalar(), {av[i]}, {a.id()}, 0.0,
                         {i});
}

// out[index[k]] += a[k], out has length n.
inline Value scatter_add(const Value& a, std::span<const std::size_t> index,
                         std::size_t n) {
  auto av = a.payload();
  if (index.size() != av.size()) {
    throw ShapeError("scatter_add: index length differs from operand length");
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= n) throw ShapeError("scatter_add: index out of range");
    out[index[k]] += av[k];
  }
  return a.tape().record(Op::scatter_add, Shape::vector(n), std::move(out),
                         {a.id()}, 0.0,
                         std::vector<std::size_t>(index.begin(), index.end()));
}

// Concatenates scalars into a vector.
inline Value stack(std::span<const Value> xs) {
  if (xs.empty()) throw ShapeError("stack: no operands");
  Tape& tape = xs.front().tape();
  std::vector<double> out;
  std::vector<NodeId> parents;
  out.reserve(xs.size());
  parents.reserve(xs.size());
  for (const Value& x : xs) {
    detail::same_tape(xs.front(), x);
    out.push_back(x.item());
    parents.push_back(x.id());
  }
  return tape.record(Op::stack, Shape::vector(xs.size()), std::move(out),
                     std::move(parents));
}

// ---- backward --------------------------------------------------------------

inline GradientMap Tape::backward(const Value& output) const {
  if (!output.valid() || &output.tape() != this) {
    throw Error("backward: output does not belong to this tape");
  }
  if (!output.shape().is_scalar()) {
    throw ShapeError("backward: output must be scalar, got " +
                     to_string(output.shape()));
  }

  std::vector<std::vector<double>> adj(nodes_.size());
  auto acc = [&](NodeId id) -> std::vector<double>& {
    auto& a = adj[id];
    if (a.empty()) a.assign(nodes_[id].value.size(), 0.0);
    return a;
  };
  adj[output.id()] = {1.0};

  for (NodeId i = output.id() + 1; i-- > 0;) {
    if (adj[i].empty()) continue;
    const Node& n = nodes_[i];
    const std::vector<double>& g = adj[i];
    const std::vector<double>& out = n.value;

    switch (n.op) {
      case Op::leaf:
        break;

      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div: {
        const auto& av = nodes_[n.parents[0]].value;
        const auto& bv = nodes_[n.parents[1]].value;
        const bool sa = av.size() == 1;
        const bool sb = bv.size() == 1;
        // Fetch both adjoints before writing: a and b may be the same node.
        std::vector<double>& ga = acc(n.parents[0]);
        std::vector<double>& gb = acc(n.parents[1]);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const double x = av[sa ? 0 : k];
          const double y = bv[sb ? 0 : k];
          double da = 0.0;
          double db = 0.0;
          switch (n.op) {
            case Op::add: da = 1.0; db = 1.0; break;
            case Op::sub: da = 1.0; db = -1.0; break;
            case Op::mul: da = y; db = x; break;
            default: da = 1.0 / y; db = -x / (y * y); break;
          }
          ga[sa ? 0 : k] += g[k] * da;
          gb[sb ? 0 : k] += g[k] * db;
        }
        break;
      }

      case Op::neg:
      case Op::exp:
      case Op::log:
      case Op::tanh:
      case Op::sigmoid:
      case Op::log_sigmoid:
      case Op::abs:
      case Op::pow:
      case Op::relu: {
        const auto& av = nodes_[n.parents[0]].value;
        auto& ga = acc(n.parents[0]);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const double x = av[k];
          double d = 0.0;
          switch (n.op) {
            case Op::neg: d = -1.0; break;
            case Op::exp: d = out[k]; break;
            case Op::log: d = 1.0 / x; break;
            case Op::tanh: d = 1.0 - out[k] * out[k]; break;
            case Op::sigmoid: d = out[k] * (1.0 - out[k]); break;
            case Op::log_sigmoid: d = detail::stable_sigmoid(-x); break;
            // Subgradient 0 at the kink.
            case Op::abs: d = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); break;
            case Op::pow: d = n.aux * std::pow(x, n.aux - 1.0); break;
            default: d = x > 0.0 ? 1.0 : 0.0; break;
          }
          ga[k] += g[k] * d;
        }
        break;
      }

      case Op::sum:
      case Op::mean: {
        auto& ga = acc(n.parents[0]);
        const double scale =
            n.op == Op::mean ? 1.0 / static_cast<double>(ga.size()) : 1.0;
        for (double& x : ga) x += g[0] * scale;
        break;
      }

      case Op::dot: {
        const auto& av = nodes_[n.parents[0]].value;
        const auto& bv = nodes_[n.parents[1]].value;
        auto& ga = acc(n.parents[0]);
        auto& gb = acc(n.parents[1]);
        for (std::size_t k = 0; k < av.size(); ++k) {
          ga[k] += g[0] * bv[k];
          gb[k] += g[0] * av[k];
        }
        break;
      }

      case Op::matvec: {
        const Node& w = nodes_[n.parents[0]];
        const auto& xv = nodes_[n.parents[1]].value;
        auto& gw = acc(n.parents[0]);
        auto& gx = acc(n.parents[1]);
        const std::size_t cols = w.shape.cols;
        for (std::size_t r = 0; r < w.shape.rows; ++r) {
          const double gr = g[r];
          const double* row = w.value.data() + r * cols;
          double* grow = gw.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            grow[c] += gr * xv[c];
            gx[c] += gr * row[c];
          }
        }
        break;
      }

      case Op::gather: {
        auto& ga = acc(n.parents[0]);
        for (std::size_t k = 0; k < n.index.size(); ++k) ga[n.index[k]] += g[k];
        break;
      }

      case Op::scatter_add: {
        auto& ga = acc(n.parents[0]);
        for (std::size_t k = 0; k < n.index.size(); ++k) ga[k] += g[n.index[k]];
        break;
      }

      case Op::stack: {
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          acc(n.parents[k])[0] += g[k];
        }
        break;
      }
    }
  }

  GradientMap grads;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op != Op::leaf || !n.trainable) continue;
    if (adj[i].empty()) {
      grads.entries_.emplace(i, std::vector<double>(n.value.size(), 0.0));
    } else {
      grads.entries_.emplace(i, std::move(adj[i]));
    }
  }
  return grads;
}

// ---- finite-difference verification ---------------------------------------

// `f(tape, params)` builds a scalar expression from a trainable vector leaf.
template <class F>
double evaluate(F&& f, std::span<const double> point) {
  Tape tape;
  Value x = tape.lift(point, true);
  return f(tape, x).item();
}

template <class F>
std::vector<double> gradient(F&& f, std::span<const double> point) {
  Tape tape;
  Value x = tape.lift(point, true);
  Value out = f(tape, x);
  const GradientMap grads = tape.backward(out);
  auto g = grads[x];
  return {g.begin(), g.end()};
}

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
template <class F>
double grad_check(F&& f, std::span<const double> point, double step) {
  if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");
  const std::vector<double> analytic = gradient(f, point);
  std::vector<double> probe(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double x0 = probe[i];
    probe[i] = x0 + step;
    const double up = evaluate(f, probe);
    probe[i] = x0 - step;
    const double down = evaluate(f, probe);
    probe[i] = x0;
    const double numeric = (up - down) / (2.0 * step);
    const double err =
        std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace diffrank::grad
