#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sphnn/ad.hpp"

namespace sphnn {

enum class Activation { softplus, linear };

struct FfnnConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden{16, 16};
  std::size_t output_dim = 1;
  Activation activation = Activation::softplus;
};

struct FicnnConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden{16, 16};
};

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace detail {

inline void check_widths(std::size_t input_dim, const std::vector<std::size_t>& hidden, const char* what) {
  if (input_dim == 0) throw ConfigError(std::string(what) + ": input dimension must be >= 1");
  for (auto w : hidden) {
    if (w == 0) throw ConfigError(std::string(what) + ": hidden widths must be >= 1");
  }
}

inline std::vector<ad::Expr> param_exprs(ad::Graph& g, std::size_t offset, std::size_t count) {
  std::vector<ad::Expr> v;
  v.reserve(count);
  for (std::size_t k = 0; k < count; ++k) v.push_back(g.param(offset + k));
  return v;
}

// Σ_k w_k h_k + b as a single dot node.
inline ad::Expr neuron(ad::Graph& g, std::span<const ad::Expr> w, std::span<const ad::Expr> h, ad::Expr b) {
  std::vector<ad::Expr> lhs(w.begin(), w.end());
  std::vector<ad::Expr> rhs(h.begin(), h.end());
  lhs.push_back(b);
  rhs.push_back(g.one());
  return g.dot(lhs, rhs);
}

}  // namespace detail

// Plain feed-forward network. Parameters live in an external ParamVector
// segment; the object only records the layout.
class Ffnn {
 public:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weights = 0;  // absolute offset of the out×in row-major block
    std::size_t biases = 0;
  };

  // Graph nodes for the weights, created once per graph and reused by every
  // application of the network within it.
  struct Bound {
    std::vector<std::vector<ad::Expr>> weights;
    std::vector<std::vector<ad::Expr>> biases;
  };

  Ffnn() = default;
  Ffnn(FfnnConfig cfg, ParamVector& params, std::string name) : cfg_(std::move(cfg)), name_(std::move(name)) {
    detail::check_widths(cfg_.input_dim, cfg_.hidden, "Ffnn");
    if (cfg_.output_dim == 0) throw ConfigError("Ffnn: output dimension must be >= 1");
    std::size_t count = 0;
    std::size_t prev = cfg_.input_dim;
    std::vector<std::size_t> widths = cfg_.hidden;
    widths.push_back(cfg_.output_dim);
    for (auto w : widths) {
      layers_.push_back({prev, w, count, count + prev * w});
      count += prev * w + w;
      prev = w;
    }
    offset_ = params.add_segment(name_, count);
    for (auto& l : layers_) {
      l.weights += offset_;
      l.biases += offset_;
    }
    size_ = count;
  }

  const FfnnConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t offset() const { return offset_; }
  std::size_t param_count() const { return size_; }

  // Glorot-uniform weights, zero biases.
  void init_glorot(ParamVector& params, std::mt19937_64& rng) const {
    for (const auto& l : layers_) {
      std::uniform_real_distribution<double> dist(-glorot_bound(l.in, l.out), glorot_bound(l.in, l.out));
      for (std::size_t k = 0; k < l.in * l.out; ++k) params[l.weights + k] = dist(rng);
      for (std::size_t k = 0; k < l.out; ++k) params[l.biases + k] = 0.0;
    }
  }

  Bound bind(ad::Graph& g) const {
    Bound b;
    for (const auto& l : layers_) {
      b.weights.push_back(detail::param_exprs(g, l.weights, l.in * l.out));
      b.biases.push_back(detail::param_exprs(g, l.biases, l.out));
    }
    return b;
  }

  std::vector<ad::Expr> apply(ad::Graph& g, const Bound& bound, std::span<const ad::Expr> x) const {
    require_dim(x.size(), cfg_.input_dim, "Ffnn input");
    std::vector<ad::Expr> h(x.begin(), x.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      const bool last = li + 1 == layers_.size();
      std::vector<ad::Expr> next;
      next.reserve(l.out);
      for (std::size_t j = 0; j < l.out; ++j) {
        std::span<const ad::Expr> w(bound.weights[li].data() + j * l.in, l.in);
        ad::Expr z = detail::neuron(g, w, h, bound.biases[li][j]);
        if (!last && cfg_.activation == Activation::softplus) z = g.softplus(z);
        next.push_back(z);
      }
      h = std::move(next);
    }
    return h;
  }

  std::vector<ad::Expr> build(ad::Graph& g, std::span<const ad::Expr> x) const { return apply(g, bind(g), x); }

 private:
  FfnnConfig cfg_;
  std::string name_;
  std::vector<Layer> layers_;
  std::size_t offset_ = 0;
  std::size_t size_ = 0;
};

// Fully input-convex network:
//   z1 = σ(W0 x + b0),  z_{i+1} = σ(U_i z_i + W_i x + b_i),  f = U_k z_k + W_k x + b_k
// with σ = softplus and U_i = softplus(raw U_i) ≥ 0 elementwise. The output
// layer has no activation.
class Ficnn {
 public:
  struct Layer {
    std::size_t in = 0;   // width of the previous z (0 for the first layer)
    std::size_t out = 0;
    std::size_t raw_u = 0;  // absolute offsets
    std::size_t w = 0;
    std::size_t b = 0;
  };

  struct Bound {
    std::vector<std::vector<ad::Expr>> u;  // effective (non-negative) U
    std::vector<std::vector<ad::Expr>> w;
    std::vector<std::vector<ad::Expr>> b;
  };

  Ficnn() = default;
  Ficnn(FicnnConfig cfg, ParamVector& params, std::string name) : cfg_(std::move(cfg)), name_(std::move(name)) {
    detail::check_widths(cfg_.input_dim, cfg_.hidden, "Ficnn");
    const std::size_t n = cfg_.input_dim;
    std::vector<std::size_t> widths = cfg_.hidden;
    widths.push_back(1);
    std::size_t count = 0;
    std::size_t prev = 0;
    for (auto w : widths) {
      Layer l{prev, w, count, count + prev * w, count + prev * w + n * w};
      count += prev * w + n * w + w;
      layers_.push_back(l);
      prev = w;
    }
    offset_ = params.add_segment(name_, count);
    for (auto& l : layers_) {
      l.raw_u += offset_;
      l.w += offset_;
      l.b += offset_;
    }
    size_ = count;
  }

  const FicnnConfig& config() const { return cfg_; }
  const std::string& name() const { return name_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t offset() const { return offset_; }
  std::size_t param_count() const { return size_; }

  // Glorot-uniform W; U is drawn the same way and stored so that its effective
  // value is |draw|; biases zero.
  void init_glorot(ParamVector& params, std::mt19937_64& rng) const {
    const std::size_t n = cfg_.input_dim;
    for (const auto& l : layers_) {
      const double a_w = glorot_bound(n, l.out);
      std::uniform_real_distribution<double> dw(-a_w, a_w);
      for (std::size_t k = 0; k < n * l.out; ++k) params[l.w + k] = dw(rng);
      if (l.in > 0) {
        const double a_u = glorot_bound(l.in, l.out);
        std::uniform_real_distribution<double> du(-a_u, a_u);
        for (std::size_t k = 0; k < l.in * l.out; ++k) {
          const double eff = std::max(std::abs(du(rng)), 1e-4 * a_u);
          params[l.raw_u + k] = ad::softplus_inverse(eff);
        }
      }
      for (std::size_t k = 0; k < l.out; ++k) params[l.b + k] = 0.0;
    }
  }

  // Effective U of layer `layer` (≥ 1), row-major out×in.
  std::vector<double> effective_u(const ParamVector& params, std::size_t layer) const {
    const auto& l = layers_.at(layer);
    std::vector<double> u(l.in * l.out);
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = ad::softplus(params[l.raw_u + k]);
    return u;
  }

  Bound bind(ad::Graph& g) const {
    Bound bd;
    const std::size_t n = cfg_.input_dim;
    for (const auto& l : layers_) {
      std::vector<ad::Expr> u;
      u.reserve(l.in * l.out);
      for (std::size_t k = 0; k < l.in * l.out; ++k) u.push_back(g.softplus(g.param(l.raw_u + k)));
      bd.u.push_back(std::move(u));
      bd.w.push_back(detail::param_exprs(g, l.w, n * l.out));
      bd.b.push_back(detail::param_exprs(g, l.b, l.out));
    }
    return bd;
  }

  ad::Expr apply(ad::Graph& g, const Bound& bd, std::span<const ad::Expr> x) const {
    const std::size_t n = cfg_.input_dim;
    require_dim(x.size(), n, "Ficnn input");
    std::vector<ad::Expr> z;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      const bool last = li + 1 == layers_.size();
      std::vector<ad::Expr> next;
      next.reserve(l.out);
      for (std::size_t j = 0; j < l.out; ++j) {
        std::vector<ad::Expr> lhs;
        std::vector<ad::Expr> rhs;
        lhs.reserve(l.in + n + 1);
        rhs.reserve(l.in + n + 1);
        for (std::size_t k = 0; k < l.in; ++k) {
          lhs.push_back(bd.u[li][j * l.in + k]);
          rhs.push_back(z[k]);
        }
        for (std::size_t k = 0; k < n; ++k) {
          lhs.push_back(bd.w[li][j * n + k]);
          rhs.push_back(x[k]);
        }
        lhs.push_back(bd.b[li][j]);
        rhs.push_back(g.one());
        ad::Expr pre = g.dot(lhs, rhs);
        next.push_back(last ? pre : g.softplus(pre));
      }
      z = std::move(next);
    }
    return z[0];
  }

  ad::Expr build(ad::Graph& g, std::span<const ad::Expr> x) const { return apply(g, bind(g), x); }

 private:
  FicnnConfig cfg_;
  std::string name_;
  std::vector<Layer> layers_;
  std::size_t offset_ = 0;
  std::size_t size_ = 0;
};

inline std::vector<double> ffnn_forward(const Ffnn& net, const ParamVector& params, std::span<const double> x) {
  require_dim(x.size(), net.config().input_dim, "ffnn_forward");
  ad::Graph g;
  const auto out = net.build(g, ad::inputs(g, 0, x.size()));
  g.forward(x, params.values());
  std::vector<double> y;
  y.reserve(out.size());
  for (const auto& e : out) y.push_back(g.value(e));
  return y;
}

inline double ficnn_forward(const Ficnn& net, const ParamVector& params, std::span<const double> x) {
  require_dim(x.size(), net.config().input_dim, "ficnn_forward");
  ad::Graph g;
  const auto out = net.build(g, ad::inputs(g, 0, x.size()));
  g.forward(x, params.values());
  return g.value(out);
}

}  // namespace sphnn
