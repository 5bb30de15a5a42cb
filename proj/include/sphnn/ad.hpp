#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sphnn/errors.hpp"
#include "sphnn/linalg.hpp"

namespace sphnn {

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

// Flat array of every trainable scalar of a model, partitioned into named
// segments. Segment order is the registration order.
class ParamVector {
 public:
  std::size_t add_segment(std::string name, std::size_t length) {
    for (const auto& s : segments_) {
      if (s.name == name) throw ConfigError("duplicate parameter segment '" + name + "'");
    }
    const std::size_t offset = values_.size();
    segments_.push_back({std::move(name), offset, length});
    values_.resize(offset + length, 0.0);
    return offset;
  }

  const Segment& find(std::string_view name) const {
    for (const auto& s : segments_) {
      if (s.name == name) return s;
    }
    throw StructuralError("no parameter segment named '" + std::string(name) + "'");
  }

  bool has_segment(std::string_view name) const {
    return std::any_of(segments_.begin(), segments_.end(),
                       [&](const Segment& s) { return s.name == name; });
  }

  std::span<double> segment(std::string_view name) {
    const auto& s = find(name);
    return {values_.data() + s.offset, s.length};
  }
  std::span<const double> segment(std::string_view name) const {
    const auto& s = find(name);
    return {values_.data() + s.offset, s.length};
  }

  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<Segment>& segments() const { return segments_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  void assign(std::span<const double> v) {
    require_dim(v.size(), values_.size(), "ParamVector::assign");
    std::copy(v.begin(), v.end(), values_.begin());
  }

 private:
  std::vector<double> values_;
  std::vector<Segment> segments_;
};

namespace ad {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

enum class NodeKind : std::uint8_t {
  constant,
  input,
  param,
  sum,
  product,
  dot,
  affine,
  softplus,
  sigmoid,
  square,
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Expr {
 public:
  Expr() = default;
  Expr(Graph* graph, std::int32_t id) : graph_(graph), id_(id) {}

  Graph* graph() const { return graph_; }
  std::int32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr && id_ >= 0; }

 private:
  Graph* graph_ = nullptr;
  std::int32_t id_ = -1;
};

// Per-caller evaluation buffers. A Graph is immutable once built, so several
// workspaces can evaluate it concurrently.
struct Workspace {
  std::vector<double> values;
  std::vector<double> adjoints;
};

// Append-only scalar computation graph (Wengert list). Nodes are topologically
// ordered by construction. Symbolic gradients append new nodes, so gradients
// of gradients come for free.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Expr constant(double v) {
    if (v == 0.0 && zero_ >= 0) return {this, zero_};
    if (v == 1.0 && one_ >= 0) return {this, one_};
    const auto id = push({NodeKind::constant, 0, 0, v});
    if (v == 0.0 && !std::signbit(v)) zero_ = id;
    if (v == 1.0) one_ = id;
    return {this, id};
  }
  Expr zero() { return constant(0.0); }
  Expr one() { return constant(1.0); }

  Expr input(std::size_t slot) {
    input_slots_ = std::max(input_slots_, slot + 1);
    return {this, push({NodeKind::input, static_cast<std::uint32_t>(slot), 0, 0.0})};
  }
  Expr param(std::size_t slot) {
    param_slots_ = std::max(param_slots_, slot + 1);
    return {this, push({NodeKind::param, static_cast<std::uint32_t>(slot), 0, 0.0})};
  }

  Expr sum(std::span<const Expr> xs) {
    if (xs.empty()) return zero();
    if (xs.size() == 1) return xs[0];
    const auto first = static_cast<std::uint32_t>(operands_.size());
    for (const auto& x : xs) operands_.push_back(own(x));
    return {this, push({NodeKind::sum, first, static_cast<std::uint32_t>(xs.size()), 0.0})};
  }
  Expr sum(std::initializer_list<Expr> xs) { return sum(std::span<const Expr>(xs.begin(), xs.size())); }

  Expr product(Expr a, Expr b) {
    const auto first = static_cast<std::uint32_t>(operands_.size());
    operands_.push_back(own(a));
    operands_.push_back(own(b));
    return {this, push({NodeKind::product, first, 2, 0.0})};
  }

  // Σ a_k b_k
  Expr dot(std::span<const Expr> a, std::span<const Expr> b) {
    require_dim(b.size(), a.size(), "Graph::dot");
    if (a.empty()) return zero();
    const auto first = static_cast<std::uint32_t>(operands_.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      operands_.push_back(own(a[k]));
      operands_.push_back(own(b[k]));
    }
    return {this, push({NodeKind::dot, first, static_cast<std::uint32_t>(a.size()), 0.0})};
  }

  // bias + Σ c_k x_k with constant coefficients
  Expr affine(double bias, std::span<const double> coeffs, std::span<const Expr> xs) {
    require_dim(xs.size(), coeffs.size(), "Graph::affine");
    const auto first = static_cast<std::uint32_t>(operands_.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      operands_.push_back(own(xs[k]));
      coeffs_.resize(operands_.size(), 0.0);
      coeffs_.back() = coeffs[k];
    }
    return {this, push({NodeKind::affine, first, static_cast<std::uint32_t>(xs.size()), bias})};
  }
  Expr affine(double bias, std::initializer_list<double> coeffs, std::initializer_list<Expr> xs) {
    return affine(bias, std::span<const double>(coeffs.begin(), coeffs.size()),
                  std::span<const Expr>(xs.begin(), xs.size()));
  }
  Expr scale(Expr x, double c) { return affine(0.0, {c}, {x}); }

  Expr softplus(Expr x) { return unary(NodeKind::softplus, x); }
  Expr sigmoid(Expr x) { return unary(NodeKind::sigmoid, x); }
  Expr square(Expr x) { return unary(NodeKind::square, x); }

  std::size_t size() const { return nodes_.size(); }
  std::size_t input_slots() const { return input_slots_; }
  std::size_t param_slots() const { return param_slots_; }
  NodeKind kind(Expr e) const { return nodes_.at(own(e)).kind; }
  bool is_constant(Expr e, double v) const {
    const auto& n = nodes_.at(own(e));
    return n.kind == NodeKind::constant && n.aux == v;
  }

  // Symbolic reverse mode: returns d(out)/d(wrt_k) as new graph nodes. Each
  // wrt node is treated as independent; nothing propagates past it.
  std::vector<Expr> gradient(Expr out, std::span<const Expr> wrt);

  void forward(Workspace& ws, std::span<const double> inputs, std::span<const double> params) const;

  // Numeric reverse mode from `out`, accumulating (+=) into the given spans.
  // Either span may be empty to skip that class of leaves.
  void backward(Workspace& ws, Expr out, std::span<double> input_grad, std::span<double> param_grad,
                double seed = 1.0) const;

  // Convenience overloads on the graph's own workspace.
  void forward(std::span<const double> inputs, std::span<const double> params) {
    forward(ws_, inputs, params);
  }
  void backward(Expr out, std::span<double> input_grad, std::span<double> param_grad, double seed = 1.0) {
    backward(ws_, out, input_grad, param_grad, seed);
  }
  double value(Expr e) const { return ws_.values.at(own(e)); }
  double value(const Workspace& ws, Expr e) const { return ws.values.at(own(e)); }
  Workspace& workspace() { return ws_; }

 private:
  struct Node {
    NodeKind kind;
    std::uint32_t first;  // operand offset, or slot for input/param
    std::uint32_t count;
    double aux;  // constant value or affine bias
  };

  struct Contribution {
    std::int32_t a;
    std::int32_t b;  // < 0: plain term a, else product a*b
  };

  std::int32_t push(Node n) {
    nodes_.push_back(n);
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }

  std::int32_t own(Expr e) const {
    if (e.graph() != this || e.id() < 0 || static_cast<std::size_t>(e.id()) >= nodes_.size()) {
      throw StructuralError("expression does not belong to this graph");
    }
    return e.id();
  }

  Expr unary(NodeKind k, Expr x) {
    const auto first = static_cast<std::uint32_t>(operands_.size());
    operands_.push_back(own(x));
    return {this, push({k, first, 1, 0.0})};
  }

  void contribute(std::vector<Contribution>& list, Expr adj, Expr factor) {
    if (is_constant(adj, 1.0)) {
      list.push_back({factor.id(), -1});
    } else if (is_constant(factor, 1.0)) {
      list.push_back({adj.id(), -1});
    } else {
      list.push_back({adj.id(), factor.id()});
    }
  }

  Expr collapse(const std::vector<Contribution>& list) {
    std::vector<Expr> terms;
    std::vector<Expr> as;
    std::vector<Expr> bs;
    for (const auto& c : list) {
      if (c.b < 0) {
        terms.emplace_back(this, c.a);
      } else {
        as.emplace_back(this, c.a);
        bs.emplace_back(this, c.b);
      }
    }
    if (as.size() == 1) {
      terms.push_back(product(as[0], bs[0]));
    } else if (as.size() > 1) {
      terms.push_back(dot(as, bs));
    }
    return sum(terms);
  }

  std::vector<Node> nodes_;
  std::vector<std::int32_t> operands_;
  std::vector<double> coeffs_;
  std::size_t input_slots_ = 0;
  std::size_t param_slots_ = 0;
  std::int32_t zero_ = -1;
  std::int32_t one_ = -1;
  Workspace ws_;
};

inline std::vector<Expr> Graph::gradient(Expr out, std::span<const Expr> wrt) {
  const std::int32_t hi = own(out);
  std::vector<Expr> result(wrt.size());
  if (wrt.empty()) return result;
  std::int32_t lo = hi + 1;
  for (const auto& w : wrt) lo = std::min(lo, own(w));
  if (lo > hi) {
    for (auto& r : result) r = zero();
    return result;
  }

  const std::size_t span_len = static_cast<std::size_t>(hi - lo + 1);
  std::vector<char> is_wrt(span_len, 0);
  std::vector<char> reach(span_len, 0);
  for (const auto& w : wrt) {
    if (w.id() <= hi) {
      is_wrt[w.id() - lo] = 1;
      reach[w.id() - lo] = 1;
    }
  }
  for (std::int32_t i = lo; i <= hi; ++i) {
    if (reach[i - lo]) continue;
    const Node& n = nodes_[i];
    if (n.kind == NodeKind::constant || n.kind == NodeKind::input || n.kind == NodeKind::param) continue;
    const std::uint32_t m = n.kind == NodeKind::dot ? 2 * n.count : n.count;
    for (std::uint32_t k = 0; k < m; ++k) {
      const auto o = operands_[n.first + k];
      if (o >= lo && reach[o - lo]) {
        reach[i - lo] = 1;
        break;
      }
    }
  }

  std::unordered_map<std::int32_t, Expr> found;
  if (reach[hi - lo]) {
    std::vector<std::vector<Contribution>> contrib(span_len);
    contrib[hi - lo].push_back({one().id(), -1});
    auto reaches = [&](std::int32_t o) { return o >= lo && reach[o - lo]; };

    for (std::int32_t i = hi; i >= lo; --i) {
      auto& list = contrib[i - lo];
      if (!reach[i - lo] || list.empty()) continue;
      const Expr adj = collapse(list);
      list.clear();
      list.shrink_to_fit();
      if (is_wrt[i - lo]) {
        found.emplace(i, adj);
        continue;
      }
      const Node n = nodes_[i];  // copy: collapse/contribute may grow nodes_
      switch (n.kind) {
        case NodeKind::constant:
        case NodeKind::input:
        case NodeKind::param:
          break;
        case NodeKind::sum:
          for (std::uint32_t k = 0; k < n.count; ++k) {
            const auto o = operands_[n.first + k];
            if (reaches(o)) contribute(contrib[o - lo], adj, one());
          }
          break;
        case NodeKind::affine:
          for (std::uint32_t k = 0; k < n.count; ++k) {
            const auto o = operands_[n.first + k];
            if (!reaches(o)) continue;
            const double c = coeffs_[n.first + k];
            if (c == 1.0) {
              contribute(contrib[o - lo], adj, one());
            } else if (c != 0.0) {
              contrib[o - lo].push_back({scale(adj, c).id(), -1});
            }
          }
          break;
        case NodeKind::product: {
          const auto a = operands_[n.first];
          const auto b = operands_[n.first + 1];
          if (reaches(a)) contribute(contrib[a - lo], adj, Expr(this, b));
          if (reaches(b)) contribute(contrib[b - lo], adj, Expr(this, a));
          break;
        }
        case NodeKind::dot:
          for (std::uint32_t k = 0; k < n.count; ++k) {
            const auto a = operands_[n.first + 2 * k];
            const auto b = operands_[n.first + 2 * k + 1];
            if (reaches(a)) contribute(contrib[a - lo], adj, Expr(this, b));
            if (reaches(b)) contribute(contrib[b - lo], adj, Expr(this, a));
          }
          break;
        case NodeKind::softplus: {
          const auto x = operands_[n.first];
          if (reaches(x)) contribute(contrib[x - lo], adj, sigmoid(Expr(this, x)));
          break;
        }
        case NodeKind::sigmoid: {
          const auto x = operands_[n.first];
          if (reaches(x)) {
            const Expr s(this, i);
            const Expr ds = affine(0.0, {1.0, -1.0}, {s, square(s)});
            contribute(contrib[x - lo], adj, ds);
          }
          break;
        }
        case NodeKind::square: {
          const auto x = operands_[n.first];
          if (reaches(x)) contribute(contrib[x - lo], adj, scale(Expr(this, x), 2.0));
          break;
        }
      }
    }
  }

  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto it = found.find(wrt[k].id());
    result[k] = it == found.end() ? zero() : it->second;
  }
  return result;
}

inline void Graph::forward(Workspace& ws, std::span<const double> inputs,
                           std::span<const double> params) const {
  if (inputs.size() < input_slots_) {
    throw StructuralError("unbound input slot: graph reads " + std::to_string(input_slots_) +
                          " inputs, " + std::to_string(inputs.size()) + " bound");
  }
  if (params.size() < param_slots_) {
    throw StructuralError("unbound parameter slot: graph reads " + std::to_string(param_slots_) +
                          " parameters, " + std::to_string(params.size()) + " bound");
  }
  auto& v = ws.values;
  v.resize(nodes_.size());
  const std::int32_t* ops = operands_.data();
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case NodeKind::constant:
        v[i] = n.aux;
        break;
      case NodeKind::input:
        v[i] = inputs[n.first];
        break;
      case NodeKind::param:
        v[i] = params[n.first];
        break;
      case NodeKind::sum: {
        double s = 0.0;
        for (std::uint32_t k = 0; k < n.count; ++k) s += v[ops[n.first + k]];
        v[i] = s;
        break;
      }
      case NodeKind::product:
        v[i] = v[ops[n.first]] * v[ops[n.first + 1]];
        break;
      case NodeKind::dot: {
        double s = 0.0;
        const std::int32_t* p = ops + n.first;
        for (std::uint32_t k = 0; k < n.count; ++k) s += v[p[2 * k]] * v[p[2 * k + 1]];
        v[i] = s;
        break;
      }
      case NodeKind::affine: {
        double s = n.aux;
        for (std::uint32_t k = 0; k < n.count; ++k) s += coeffs_[n.first + k] * v[ops[n.first + k]];
        v[i] = s;
        break;
      }
      case NodeKind::softplus:
        v[i] = ad::softplus(v[ops[n.first]]);
        break;
      case NodeKind::sigmoid:
        v[i] = ad::sigmoid(v[ops[n.first]]);
        break;
      case NodeKind::square: {
        const double x = v[ops[n.first]];
        v[i] = x * x;
        break;
      }
    }
  }
}

inline void Graph::backward(Workspace& ws, Expr out, std::span<double> input_grad,
                            std::span<double> param_grad, double seed) const {
  const std::int32_t top = own(out);
  if (ws.values.size() != nodes_.size()) throw StructuralError("backward called before forward");
  const auto& v = ws.values;
  auto& adj = ws.adjoints;
  adj.assign(static_cast<std::size_t>(top) + 1, 0.0);
  adj[top] = seed;
  const std::int32_t* ops = operands_.data();
  for (std::int32_t i = top; i >= 0; --i) {
    const double a = adj[i];
    if (a == 0.0) continue;
    const Node& n = nodes_[i];
    switch (n.kind) {
      case NodeKind::constant:
        break;
      case NodeKind::input:
        if (!input_grad.empty()) input_grad[n.first] += a;
        break;
      case NodeKind::param:
        if (!param_grad.empty()) param_grad[n.first] += a;
        break;
      case NodeKind::sum:
        for (std::uint32_t k = 0; k < n.count; ++k) adj[ops[n.first + k]] += a;
        break;
      case NodeKind::product: {
        const auto x = ops[n.first];
        const auto y = ops[n.first + 1];
        adj[x] += a * v[y];
        adj[y] += a * v[x];
        break;
      }
      case NodeKind::dot: {
        const std::int32_t* p = ops + n.first;
        for (std::uint32_t k = 0; k < n.count; ++k) {
          const auto x = p[2 * k];
          const auto y = p[2 * k + 1];
          adj[x] += a * v[y];
          adj[y] += a * v[x];
        }
        break;
      }
      case NodeKind::affine:
        for (std::uint32_t k = 0; k < n.count; ++k) adj[ops[n.first + k]] += a * coeffs_[n.first + k];
        break;
      case NodeKind::softplus: {
        const auto x = ops[n.first];
        adj[x] += a * ad::sigmoid(v[x]);
        break;
      }
      case NodeKind::sigmoid: {
        const double s = v[i];
        adj[ops[n.first]] += a * s * (1.0 - s);
        break;
      }
      case NodeKind::square: {
        const auto x = ops[n.first];
        adj[x] += 2.0 * a * v[x];
        break;
      }
    }
  }
}

inline Expr operator+(Expr a, Expr b) { return a.graph()->sum({a, b}); }
inline Expr operator-(Expr a, Expr b) { return a.graph()->affine(0.0, {1.0, -1.0}, {a, b}); }
inline Expr operator-(Expr a) { return a.graph()->scale(a, -1.0); }
inline Expr operator*(Expr a, Expr b) { return a.graph()->product(a, b); }
inline Expr operator*(Expr a, double c) { return a.graph()->scale(a, c); }
inline Expr operator*(double c, Expr a) { return a.graph()->scale(a, c); }
inline Expr operator+(Expr a, double c) { return a.graph()->affine(c, {1.0}, {a}); }

// Value of `expr` with the given bindings.
inline double eval(Graph& g, Expr expr, std::span<const double> inputs, std::span<const double> params) {
  g.forward(inputs, params);
  return g.value(expr);
}

inline std::vector<double> grad_input(Graph& g, Expr expr, std::span<const double> inputs,
                                      std::span<const double> params) {
  g.forward(inputs, params);
  std::vector<double> grad(inputs.size(), 0.0);
  g.backward(expr, grad, {});
  return grad;
}

inline std::vector<double> grad_params(Graph& g, Expr expr, std::span<const double> inputs,
                                       std::span<const double> params) {
  g.forward(inputs, params);
  std::vector<double> grad(params.size(), 0.0);
  g.backward(expr, {}, grad);
  return grad;
}

// Hessian with respect to the inputs: central differences of the exact input
// gradient, then symmetrized.
inline Matrix hessian(Graph& g, Expr expr, std::span<const double> x, std::span<const double> params,
                      double step = 1e-5) {
  const std::size_t n = x.size();
  Matrix h(n, n);
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t j = 0; j < n; ++j) {
    xp[j] = x[j] + step;
    const auto gp = grad_input(g, expr, xp, params);
    xp[j] = x[j] - step;
    const auto gm = grad_input(g, expr, xp, params);
    xp[j] = x[j];
    for (std::size_t i = 0; i < n; ++i) h(i, j) = (gp[i] - gm[i]) / (2.0 * step);
  }
  return symmetrized(h);
}

inline std::vector<Expr> inputs(Graph& g, std::size_t first_slot, std::size_t count) {
  std::vector<Expr> xs;
  xs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) xs.push_back(g.input(first_slot + k));
  return xs;
}

}  // namespace ad
}  // namespace sphnn
