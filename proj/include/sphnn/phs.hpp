#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sphnn/ad.hpp"
#include "sphnn/linalg.hpp"
#include "sphnn/nets.hpp"

namespace sphnn {

enum class ModelKind { sphnn, sphnn_lm, bphnn, phnn, node };
enum class MatrixMode { zero, constant, state_dependent, fixed_symplectic };
enum class Definiteness { strict, semi };

struct ModelSpec {
  ModelKind kind = ModelKind::sphnn;
  std::size_t n = 2;  // state dimension, augmented dims included
  std::size_t m = 0;  // input dimension
  std::vector<std::size_t> hidden{16, 16};
  MatrixMode j_mode = MatrixMode::constant;
  MatrixMode r_mode = MatrixMode::constant;
  MatrixMode g_mode = MatrixMode::zero;
  Definiteness r_definiteness = Definiteness::strict;
  double epsilon = 0.0;          // weight of ε‖x − x*‖² (sphnn variants)
  double beta = 0.1;             // weight of β‖x‖² (bphnn)
  std::vector<double> xstar;     // fixed equilibrium; empty means the origin
  double xstar_box = 1.0;        // sphnn_lm draws x* from U(-box, box)^n
  std::size_t energy_outputs = 0;  // bphnn: width of g, 0 means n
  std::uint64_t seed = 0;
};

inline bool is_phs(ModelKind k) { return k != ModelKind::node; }
inline bool is_sphnn(ModelKind k) { return k == ModelKind::sphnn || k == ModelKind::sphnn_lm; }

inline std::size_t skew_length(std::size_t n) { return n * (n - 1) / 2; }
inline std::size_t lower_length(std::size_t n) { return n * (n + 1) / 2; }

// J[i][j] = -v_k, J[j][i] = v_k for i < j, k running row-major over the
// strict upper triangle.
inline Matrix skew_from_vec(std::span<const double> v, std::size_t n) {
  require_dim(v.size(), skew_length(n), "skew_from_vec");
  Matrix j(n, n);
  std::size_t k = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r + 1; c < n; ++c, ++k) {
      j(r, c) = -v[k];
      j(c, r) = v[k];
    }
  return j;
}

// Lower-triangular factor filled row-major; strict mode maps the diagonal
// through softplus so that it is positive.
inline Matrix lower_from_vec(std::span<const double> v, std::size_t n, Definiteness mode) {
  require_dim(v.size(), lower_length(n), "lower_from_vec");
  Matrix l(n, n);
  std::size_t k = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c <= r; ++c, ++k)
      l(r, c) = (r == c && mode == Definiteness::strict) ? ad::softplus(v[k]) : v[k];
  return l;
}

// R = L Lᵀ.
inline Matrix spd_from_vec(std::span<const double> v, std::size_t n, Definiteness mode) {
  const Matrix l = lower_from_vec(v, n, mode);
  return l * l.transposed();
}

inline Matrix symplectic_matrix(std::size_t n) {
  if (n % 2 != 0) throw ConfigError("symplectic structure matrix needs an even state dimension");
  const std::size_t h = n / 2;
  Matrix j(n, n);
  for (std::size_t i = 0; i < h; ++i) {
    j(i, h + i) = -1.0;
    j(h + i, i) = 1.0;
  }
  return j;
}

namespace detail {

// Dot product skipping structurally zero entries.
inline ad::Expr sparse_dot(ad::Graph& g, std::span<const ad::Expr> a, std::span<const ad::Expr> b) {
  std::vector<ad::Expr> lhs;
  std::vector<ad::Expr> rhs;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (g.is_constant(a[k], 0.0) || g.is_constant(b[k], 0.0)) continue;
    lhs.push_back(a[k]);
    rhs.push_back(b[k]);
  }
  return g.dot(lhs, rhs);
}

}  // namespace detail

// One of the J, R, G heads. Holds either an FFNN of the state or a raw
// parameter block; the matrix structure is imposed on its output.
class MatrixHead {
 public:
  enum class Role { structure, dissipation, input };

  struct Bound {
    Ffnn::Bound net;
    std::vector<ad::Expr> fixed;  // matrix entries when independent of x
  };

  MatrixHead() = default;
  MatrixHead(Role role, MatrixMode mode, std::size_t n, std::size_t m, Definiteness def,
             const std::vector<std::size_t>& hidden, ParamVector& params, const std::string& name)
      : role_(role), mode_(mode), n_(n), m_(m), def_(def) {
    if (mode == MatrixMode::fixed_symplectic) {
      if (role != Role::structure) throw ConfigError(name + ": only J can be fixed to the symplectic matrix");
      if (n % 2 != 0) throw ConfigError(name + ": fixed symplectic J requires an even state dimension");
    }
    if (role == Role::input && m == 0 && mode != MatrixMode::zero) {
      throw ConfigError(name + ": input matrix requires m >= 1");
    }
    const std::size_t len = raw_length();
    if (mode == MatrixMode::constant && len > 0) {
      offset_ = params.add_segment(name, len);
    } else if (mode == MatrixMode::state_dependent && len > 0) {
      net_ = Ffnn({n, hidden, len, Activation::softplus}, params, name);
      has_net_ = true;
    }
  }

  Role role() const { return role_; }
  MatrixMode mode() const { return mode_; }
  Definiteness definiteness() const { return def_; }
  std::size_t rows() const { return n_; }
  std::size_t cols() const { return role_ == Role::input ? m_ : n_; }
  bool is_zero() const { return mode_ == MatrixMode::zero || raw_length() == 0; }

  std::size_t raw_length() const {
    switch (role_) {
      case Role::structure:
        return skew_length(n_);
      case Role::dissipation:
        return lower_length(n_);
      case Role::input:
        return n_ * m_;
    }
    return 0;
  }

  void init(ParamVector& params, std::mt19937_64& rng) const {
    if (has_net_) {
      net_.init_glorot(params, rng);
    } else if (mode_ == MatrixMode::constant && raw_length() > 0) {
      const double a = glorot_bound(n_, cols());
      std::uniform_real_distribution<double> dist(-a, a);
      for (std::size_t k = 0; k < raw_length(); ++k) params[offset_ + k] = dist(rng);
    }
  }

  std::optional<std::size_t> constant_offset() const {
    if (mode_ == MatrixMode::constant && raw_length() > 0) return offset_;
    return std::nullopt;
  }
  const Ffnn* net() const { return has_net_ ? &net_ : nullptr; }

  Bound bind(ad::Graph& g) const {
    Bound b;
    if (has_net_) b.net = net_.bind(g);
    if (mode_ == MatrixMode::constant && raw_length() > 0) {
      b.fixed = shape(g, detail::param_exprs(g, offset_, raw_length()));
    } else if (mode_ == MatrixMode::fixed_symplectic) {
      const Matrix s = symplectic_matrix(n_);
      for (double v : s.data()) b.fixed.push_back(g.constant(v));
    } else if (is_zero()) {
      b.fixed.assign(rows() * cols(), g.zero());
    }
    return b;
  }

  // Row-major entries. For R this is the Cholesky factor L, not R itself.
  std::vector<ad::Expr> entries(ad::Graph& g, const Bound& b, std::span<const ad::Expr> x) const {
    if (!has_net_) return b.fixed;
    return shape(g, net_.apply(g, b.net, x));
  }

 private:
  std::vector<ad::Expr> shape(ad::Graph& g, const std::vector<ad::Expr>& raw) const {
    std::vector<ad::Expr> e(rows() * cols(), g.zero());
    std::size_t k = 0;
    switch (role_) {
      case Role::structure:
        for (std::size_t r = 0; r < n_; ++r)
          for (std::size_t c = r + 1; c < n_; ++c, ++k) {
            e[r * n_ + c] = g.scale(raw[k], -1.0);
            e[c * n_ + r] = raw[k];
          }
        break;
      case Role::dissipation:
        for (std::size_t r = 0; r < n_; ++r)
          for (std::size_t c = 0; c <= r; ++c, ++k)
            e[r * n_ + c] = (r == c && def_ == Definiteness::strict) ? g.softplus(raw[k]) : raw[k];
        break;
      case Role::input:
        e = raw;
        break;
    }
    return e;
  }

  Role role_ = Role::structure;
  MatrixMode mode_ = MatrixMode::zero;
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  Definiteness def_ = Definiteness::strict;
  std::size_t offset_ = 0;
  Ffnn net_;
  bool has_net_ = false;
};

// Graph expressions of one model evaluation.
struct PhsTerms {
  ad::Expr hamiltonian;
  std::vector<ad::Expr> grad;          // ∂ℋ/∂x
  std::vector<ad::Expr> conservative;  // J ∂ℋ/∂x
  std::vector<ad::Expr> dissipative;   // -R ∂ℋ/∂x
  std::vector<ad::Expr> input;         // G u
  std::vector<ad::Expr> rhs;           // sum of the three, or the NODE output
  ad::Expr supply;                     // ∂ℋ/∂xᵀ G u
};

struct MatrixTerms {
  std::vector<ad::Expr> j;  // n×n
  std::vector<ad::Expr> r;  // n×n
  std::vector<ad::Expr> g;  // n×m
};

// The model zoo: sPHNN, sPHNN-LM, bPHNN, PHNN and the unconstrained NODE,
// all as right-hand sides ẋ = f(x, u). Owns every trainable parameter.
class PhsModel {
 public:
  // Per-graph shared nodes: bound weights, x*-dependent normalization terms
  // and state-independent matrices.
  struct Context {
    Ficnn::Bound ficnn;
    Ffnn::Bound energy;
    Ffnn::Bound node;
    MatrixHead::Bound j, r, g;
    std::vector<ad::Expr> xstar;
    ad::Expr f_at_xstar;
    std::vector<ad::Expr> grad_f_at_xstar;
  };

  explicit PhsModel(ModelSpec spec) : spec_(std::move(spec)) {
    validate();
    const std::size_t n = spec_.n;
    switch (spec_.kind) {
      case ModelKind::sphnn:
      case ModelKind::sphnn_lm:
        ficnn_ = Ficnn({n, spec_.hidden}, params_, "hamiltonian");
        break;
      case ModelKind::bphnn:
        energy_ = Ffnn({n, spec_.hidden, energy_outputs(), Activation::softplus}, params_, "hamiltonian");
        break;
      case ModelKind::phnn:
        energy_ = Ffnn({n, spec_.hidden, 1, Activation::softplus}, params_, "hamiltonian");
        break;
      case ModelKind::node:
        node_ = Ffnn({n + spec_.m, spec_.hidden, n, Activation::softplus}, params_, "dynamics");
        break;
    }
    if (is_phs(spec_.kind)) {
      j_ = MatrixHead(MatrixHead::Role::structure, spec_.j_mode, n, spec_.m, spec_.r_definiteness, spec_.hidden,
                      params_, "J");
      r_ = MatrixHead(MatrixHead::Role::dissipation, spec_.r_mode, n, spec_.m, spec_.r_definiteness,
                      spec_.hidden, params_, "R");
      g_ = MatrixHead(MatrixHead::Role::input, spec_.g_mode, n, spec_.m, spec_.r_definiteness, spec_.hidden,
                      params_, "G");
    }
    if (spec_.kind == ModelKind::sphnn_lm) xstar_offset_ = params_.add_segment("xstar", n);
    initialize(spec_.seed);
  }

  // Re-draws every parameter from `seed`.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    switch (spec_.kind) {
      case ModelKind::sphnn:
      case ModelKind::sphnn_lm:
        ficnn_.init_glorot(params_, rng);
        break;
      case ModelKind::bphnn:
      case ModelKind::phnn:
        energy_.init_glorot(params_, rng);
        break;
      case ModelKind::node:
        node_.init_glorot(params_, rng);
        break;
    }
    if (is_phs(spec_.kind)) {
      j_.init(params_, rng);
      r_.init(params_, rng);
      g_.init(params_, rng);
    }
    if (spec_.kind == ModelKind::sphnn_lm) {
      std::uniform_real_distribution<double> dist(-spec_.xstar_box, spec_.xstar_box);
      for (std::size_t i = 0; i < spec_.n; ++i) params_[xstar_offset_ + i] = dist(rng);
    }
  }

  const ModelSpec& spec() const { return spec_; }
  ModelKind kind() const { return spec_.kind; }
  std::size_t state_dim() const { return spec_.n; }
  std::size_t input_dim() const { return spec_.m; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }
  const Ficnn* ficnn() const { return is_sphnn(spec_.kind) ? &ficnn_ : nullptr; }
  const MatrixHead& structure_head() const { return j_; }
  const MatrixHead& dissipation_head() const { return r_; }
  const MatrixHead& input_head() const { return g_; }

  // Current equilibrium x*: the trainable one for sphnn_lm, else the fixed one.
  std::vector<double> xstar() const {
    if (spec_.kind == ModelKind::sphnn_lm) {
      auto s = params_.segment("xstar");
      return {s.begin(), s.end()};
    }
    if (spec_.xstar.empty()) return std::vector<double>(spec_.n, 0.0);
    return spec_.xstar;
  }

  Context prepare(ad::Graph& g) const {
    Context ctx;
    const std::size_t n = spec_.n;
    if (is_sphnn(spec_.kind)) {
      ctx.ficnn = ficnn_.bind(g);
      if (spec_.kind == ModelKind::sphnn_lm) {
        ctx.xstar = detail::param_exprs(g, xstar_offset_, n);
      } else {
        for (double v : xstar()) ctx.xstar.push_back(g.constant(v));
      }
      // Dedicated nodes for x* so the symbolic gradient below has leaves to
      // differentiate against, even when x* is a shared constant.
      std::vector<ad::Expr> at;
      for (const auto& e : ctx.xstar) at.push_back(g.affine(0.0, {1.0}, {e}));
      ctx.f_at_xstar = ficnn_.apply(g, ctx.ficnn, at);
      ctx.grad_f_at_xstar = g.gradient(ctx.f_at_xstar, at);
      ctx.xstar = at;
    } else if (spec_.kind == ModelKind::bphnn || spec_.kind == ModelKind::phnn) {
      ctx.energy = energy_.bind(g);
    } else {
      ctx.node = node_.bind(g);
    }
    if (is_phs(spec_.kind)) {
      ctx.j = j_.bind(g);
      ctx.r = r_.bind(g);
      ctx.g = g_.bind(g);
    }
    return ctx;
  }

  ad::Expr build_hamiltonian(ad::Graph& g, const Context& ctx, std::span<const ad::Expr> x) const {
    require_dim(x.size(), spec_.n, "hamiltonian state");
    switch (spec_.kind) {
      case ModelKind::sphnn:
      case ModelKind::sphnn_lm: {
        // f(x) - f(x*) - ∇f(x*)ᵀ(x - x*) + ε‖x - x*‖²
        const ad::Expr fx = ficnn_.apply(g, ctx.ficnn, x);
        std::vector<ad::Expr> d;
        for (std::size_t i = 0; i < spec_.n; ++i) d.push_back(x[i] - ctx.xstar[i]);
        const ad::Expr tangent = g.dot(ctx.grad_f_at_xstar, d);
        if (spec_.epsilon > 0.0) {
          return g.affine(0.0, {1.0, -1.0, -1.0, spec_.epsilon}, {fx, ctx.f_at_xstar, tangent, g.dot(d, d)});
        }
        return g.affine(0.0, {1.0, -1.0, -1.0}, {fx, ctx.f_at_xstar, tangent});
      }
      case ModelKind::bphnn: {
        // Σ g_i(x)² + β‖x‖²
        const auto out = energy_.apply(g, ctx.energy, x);
        return g.affine(0.0, {1.0, spec_.beta}, {g.dot(out, out), g.dot(x, x)});
      }
      case ModelKind::phnn:
        return energy_.apply(g, ctx.energy, x)[0];
      case ModelKind::node:
        break;
    }
    throw UnsupportedError("the NODE model has no Hamiltonian");
  }

  MatrixTerms build_matrices(ad::Graph& g, const Context& ctx, std::span<const ad::Expr> x) const {
    if (!is_phs(spec_.kind)) throw UnsupportedError("the NODE model has no structure matrices");
    const std::size_t n = spec_.n;
    MatrixTerms mt;
    mt.j = j_.entries(g, ctx.j, x);
    const auto l = r_.entries(g, ctx.r, x);
    mt.r.assign(n * n, g.zero());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        mt.r[i * n + k] = detail::sparse_dot(g, std::span(l).subspan(i * n, n), std::span(l).subspan(k * n, n));
    mt.g = g_.entries(g, ctx.g, x);
    return mt;
  }

  PhsTerms build(ad::Graph& g, const Context& ctx, std::span<const ad::Expr> x,
                 std::span<const ad::Expr> u) const {
    const std::size_t n = spec_.n;
    const std::size_t m = spec_.m;
    require_dim(x.size(), n, "model state");
    require_dim(u.size(), m, "model input");
    PhsTerms t;
    if (spec_.kind == ModelKind::node) {
      std::vector<ad::Expr> xu(x.begin(), x.end());
      xu.insert(xu.end(), u.begin(), u.end());
      t.rhs = node_.apply(g, ctx.node, xu);
      return t;
    }

    t.hamiltonian = build_hamiltonian(g, ctx, x);
    t.grad = g.gradient(t.hamiltonian, x);

    const auto j = j_.entries(g, ctx.j, x);
    const auto l = r_.entries(g, ctx.r, x);
    const auto gm = g_.entries(g, ctx.g, x);

    // w = Lᵀ ∇ℋ, dissipative = -L w
    std::vector<ad::Expr> w(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<ad::Expr> col;
      std::vector<ad::Expr> gr;
      for (std::size_t i = k; i < n; ++i) {
        col.push_back(l[i * n + k]);
        gr.push_back(t.grad[i]);
      }
      w[k] = detail::sparse_dot(g, col, gr);
    }
    for (std::size_t i = 0; i < n; ++i) {
      t.conservative.push_back(detail::sparse_dot(g, std::span(j).subspan(i * n, n), t.grad));
      const ad::Expr lw = detail::sparse_dot(g, std::span(l).subspan(i * n, i + 1), std::span(w).first(i + 1));
      t.dissipative.push_back(g.is_constant(lw, 0.0) ? lw : g.scale(lw, -1.0));
      t.input.push_back(m == 0 ? g.zero() : detail::sparse_dot(g, std::span(gm).subspan(i * m, m), u));
      // evaluated left to right: conservative + dissipative + input
      t.rhs.push_back(g.sum({t.conservative[i], t.dissipative[i], t.input[i]}));
    }
    t.supply = detail::sparse_dot(g, t.grad, t.input);
    return t;
  }

 private:
  std::size_t energy_outputs() const { return spec_.energy_outputs == 0 ? spec_.n : spec_.energy_outputs; }

  void validate() const {
    if (spec_.n == 0) throw ConfigError("state dimension n must be >= 1");
    for (auto w : spec_.hidden) {
      if (w == 0) throw ConfigError("hidden widths must be >= 1");
    }
    if (!spec_.xstar.empty() && spec_.xstar.size() != spec_.n) {
      throw ConfigError("xstar has " + std::to_string(spec_.xstar.size()) + " entries, expected " +
                        std::to_string(spec_.n));
    }
    if (spec_.epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
    if (spec_.kind == ModelKind::bphnn && !(spec_.beta > 0.0)) throw ConfigError("bphnn requires beta > 0");
    if (spec_.kind == ModelKind::sphnn_lm && !(spec_.xstar_box > 0.0)) {
      throw ConfigError("xstar_box must be > 0");
    }
    if (is_phs(spec_.kind)) {
      if (spec_.r_mode == MatrixMode::fixed_symplectic || spec_.g_mode == MatrixMode::fixed_symplectic) {
        throw ConfigError("only J can be fixed to the symplectic matrix");
      }
      if (spec_.j_mode == MatrixMode::fixed_symplectic && spec_.n % 2 != 0) {
        throw ConfigError("fixed symplectic J requires an even state dimension, got n = " +
                          std::to_string(spec_.n));
      }
      if (spec_.g_mode != MatrixMode::zero && spec_.m == 0) {
        throw ConfigError("an input matrix G requires m >= 1");
      }
    }
  }

  ModelSpec spec_;
  ParamVector params_;
  Ficnn ficnn_;
  Ffnn energy_;
  Ffnn node_;
  MatrixHead j_, r_, g_;
  std::size_t xstar_offset_ = 0;
};

inline PhsModel build_model(const ModelSpec& spec) { return PhsModel(spec); }

// Cached evaluation graphs for one model. Reads the model's parameters at
// every call, so it stays valid while the model trains. Not thread-safe;
// use one Evaluator per thread.
class Evaluator {
 public:
  explicit Evaluator(const PhsModel& model) : model_(&model) {
    const std::size_t n = model.state_dim();
    const std::size_t m = model.input_dim();
    graph_ = std::make_unique<ad::Graph>();
    const auto ctx = model.prepare(*graph_);
    const auto x = ad::inputs(*graph_, 0, n);
    const auto u = ad::inputs(*graph_, n, m);
    terms_ = model.build(*graph_, ctx, x, u);
    bound_.assign(n + m, 0.0);
  }

  const PhsModel& model() const { return *model_; }

  // An empty u means zero input.
  void evaluate(std::span<const double> x, std::span<const double> u = {}) {
    const std::size_t n = model_->state_dim();
    const std::size_t m = model_->input_dim();
    require_dim(x.size(), n, "state");
    if (!u.empty()) require_dim(u.size(), m, "input");
    std::copy(x.begin(), x.end(), bound_.begin());
    if (u.empty()) {
      std::fill(bound_.begin() + static_cast<std::ptrdiff_t>(n), bound_.end(), 0.0);
    } else {
      std::copy(u.begin(), u.end(), bound_.begin() + static_cast<std::ptrdiff_t>(n));
    }
    graph_->forward(bound_, model_->params().values());
  }

  void rhs(std::span<const double> x, std::span<const double> u, std::span<double> out) {
    evaluate(x, u);
    require_dim(out.size(), model_->state_dim(), "rhs output");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = graph_->value(terms_.rhs[i]);
  }

  // Accessors for the last evaluate() call.
  std::vector<double> rhs() const { return values(terms_.rhs); }
  double hamiltonian() const {
    require_hamiltonian();
    return graph_->value(terms_.hamiltonian);
  }
  std::vector<double> gradient() const {
    require_hamiltonian();
    return values(terms_.grad);
  }
  std::vector<double> conservative() const {
    require_hamiltonian();
    return values(terms_.conservative);
  }
  std::vector<double> dissipative() const {
    require_hamiltonian();
    return values(terms_.dissipative);
  }
  std::vector<double> input_term() const {
    require_hamiltonian();
    return values(terms_.input);
  }
  double supply_rate() const {
    require_hamiltonian();
    return graph_->value(terms_.supply);
  }

  Matrix structure_matrix(std::span<const double> x) { return matrix(x, 0); }
  Matrix dissipation_matrix(std::span<const double> x) { return matrix(x, 1); }
  Matrix input_matrix(std::span<const double> x) { return matrix(x, 2); }

 private:
  void require_hamiltonian() const {
    if (!is_phs(model_->kind())) throw UnsupportedError("the NODE model has no Hamiltonian");
  }

  std::vector<double> values(const std::vector<ad::Expr>& es) const {
    std::vector<double> v;
    v.reserve(es.size());
    for (const auto& e : es) v.push_back(graph_->value(e));
    return v;
  }

  Matrix matrix(std::span<const double> x, int which) {
    require_hamiltonian();
    const std::size_t n = model_->state_dim();
    const std::size_t m = model_->input_dim();
    require_dim(x.size(), n, "state");
    if (!matrix_graph_) {
      matrix_graph_ = std::make_unique<ad::Graph>();
      const auto ctx = model_->prepare(*matrix_graph_);
      matrices_ = model_->build_matrices(*matrix_graph_, ctx, ad::inputs(*matrix_graph_, 0, n));
    }
    matrix_graph_->forward(x, model_->params().values());
    const auto& es = which == 0 ? matrices_.j : which == 1 ? matrices_.r : matrices_.g;
    Matrix out(n, which == 2 ? m : n);
    for (std::size_t k = 0; k < es.size(); ++k) out.data()[k] = matrix_graph_->value(es[k]);
    return out;
  }

  const PhsModel* model_;
  std::unique_ptr<ad::Graph> graph_;
  PhsTerms terms_;
  std::unique_ptr<ad::Graph> matrix_graph_;
  MatrixTerms matrices_;
  std::vector<double> bound_;
};

struct Decomposition {
  std::vector<double> conservative;
  std::vector<double> dissipative;
  std::vector<double> input;
};

inline double hamiltonian(const PhsModel& model, std::span<const double> x) {
  if (!is_phs(model.kind())) throw UnsupportedError("the NODE model has no Hamiltonian");
  Evaluator ev(model);
  ev.evaluate(x);
  return ev.hamiltonian();
}

inline std::vector<double> hamiltonian_gradient(const PhsModel& model, std::span<const double> x) {
  if (!is_phs(model.kind())) throw UnsupportedError("the NODE model has no Hamiltonian");
  Evaluator ev(model);
  ev.evaluate(x);
  return ev.gradient();
}

inline std::vector<double> rhs(const PhsModel& model, std::span<const double> x, std::span<const double> u = {}) {
  Evaluator ev(model);
  ev.evaluate(x, u);
  return ev.rhs();
}

inline Decomposition decompose(const PhsModel& model, std::span<const double> x, std::span<const double> u = {}) {
  if (!is_phs(model.kind())) throw UnsupportedError("the NODE model cannot be decomposed");
  Evaluator ev(model);
  ev.evaluate(x, u);
  return {ev.conservative(), ev.dissipative(), ev.input_term()};
}

inline double supply_rate(const PhsModel& model, std::span<const double> x, std::span<const double> u = {}) {
  if (!is_phs(model.kind())) throw UnsupportedError("the NODE model has no supply rate");
  Evaluator ev(model);
  ev.evaluate(x, u);
  return ev.supply_rate();
}

// Hessian of ℋ at x by central differences of the exact gradient.
inline Matrix hamiltonian_hessian(const PhsModel& model, std::span<const double> x, double step = 1e-5) {
  if (!is_phs(model.kind())) throw UnsupportedError("the NODE model has no Hamiltonian");
  ad::Graph g;
  const auto ctx = model.prepare(g);
  const auto xs = ad::inputs(g, 0, model.state_dim());
  const auto h = model.build_hamiltonian(g, ctx, xs);
  return ad::hessian(g, h, x, model.params().values(), step);
}

}  // namespace sphnn
