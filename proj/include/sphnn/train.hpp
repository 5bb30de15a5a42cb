#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "sphnn/ad.hpp"
#include "sphnn/data.hpp"
#include "sphnn/ode.hpp"
#include "sphnn/phs.hpp"
#include "sphnn/trajectory.hpp"

namespace sphnn {

enum class Regime { derivative, trajectory };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  Regime regime = Regime::derivative;
  std::size_t steps = 1000;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;     // derivative regime
  std::size_t rollout_length = 0;   // trajectory regime, samples per window; 0 = whole trajectory
  std::size_t substeps = 1;         // RK4 steps per sampling interval
  Interpolation interpolation = Interpolation::linear;  // of the recorded inputs
  std::size_t augmented_dims = 0;
  std::vector<std::size_t> observed;  // state indices compared with data; empty = the first n - n_A
  std::uint64_t seed = 0;
  AdamConfig adam;
  std::size_t threads = 1;
  // Called after every optimizer step with (step index, loss before the step).
  std::function<void(std::size_t, double)> on_step;
};

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> seconds;
  std::vector<double> final_params;
};

// Mean of squared differences over the selected columns (all when empty).
inline double mse(const Matrix& pred, const Matrix& target, std::span<const std::size_t> dims = {}) {
  require_dim(pred.rows(), target.rows(), "mse rows");
  require_dim(pred.cols(), target.cols(), "mse cols");
  std::vector<std::size_t> cols(dims.begin(), dims.end());
  if (cols.empty()) {
    cols.resize(pred.cols());
    std::iota(cols.begin(), cols.end(), 0);
  }
  if (pred.rows() == 0 || cols.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i)
    for (auto c : cols) {
      if (c >= pred.cols()) throw StructuralError("mse: column index out of range");
      const double d = pred(i, c) - target(i, c);
      s += d * d;
    }
  return s / static_cast<double>(pred.rows() * cols.size());
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

// One bias-corrected ADAM update in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  require_dim(grads.size(), params.size(), "adam gradient");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  require_dim(state.m.size(), params.size(), "adam state");
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

// Minibatch MSE between model right-hand sides and target derivatives,
// differentiable in the model parameters.
class DerivativeLoss {
 public:
  DerivativeLoss(const PhsModel& model, std::size_t batch) : model_(&model), batch_(batch) {
    const std::size_t n = model.state_dim();
    const std::size_t m = model.input_dim();
    stride_ = 2 * n + m;
    const auto ctx = model.prepare(graph_);
    std::vector<ad::Expr> squares;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = b * stride_;
      const auto x = ad::inputs(graph_, base, n);
      const auto u = ad::inputs(graph_, base + n, m);
      const auto target = ad::inputs(graph_, base + n + m, n);
      const auto terms = model.build(graph_, ctx, x, u);
      for (std::size_t i = 0; i < n; ++i) squares.push_back(graph_.square(terms.rhs[i] - target[i]));
    }
    const std::vector<double> w(squares.size(), 1.0 / static_cast<double>(squares.size()));
    loss_ = graph_.affine(0.0, w, squares);
    bound_.assign(batch * stride_, 0.0);
  }

  std::size_t batch() const { return batch_; }

  // Loss over the given pairs (exactly batch() of them); adds ∂loss/∂θ to grad
  // when it is non-empty.
  double evaluate(std::span<const DerivativePair* const> pairs, std::span<double> grad) {
    require_dim(pairs.size(), batch_, "derivative batch");
    const std::size_t n = model_->state_dim();
    const std::size_t m = model_->input_dim();
    for (std::size_t b = 0; b < batch_; ++b) {
      const auto& p = *pairs[b];
      require_dim(p.x.size(), n, "pair state");
      require_dim(p.dxdt.size(), n, "pair derivative");
      double* dst = bound_.data() + b * stride_;
      std::copy(p.x.begin(), p.x.end(), dst);
      if (m > 0) {
        if (p.u.empty()) {
          std::fill(dst + n, dst + n + m, 0.0);
        } else {
          require_dim(p.u.size(), m, "pair input");
          std::copy(p.u.begin(), p.u.end(), dst + n);
        }
      }
      std::copy(p.dxdt.begin(), p.dxdt.end(), dst + n + m);
    }
    graph_.forward(bound_, model_->params().values());
    const double value = graph_.value(loss_);
    if (!grad.empty()) graph_.backward(loss_, {}, grad);
    return value;
  }

 private:
  const PhsModel* model_;
  std::size_t batch_;
  std::size_t stride_ = 0;
  ad::Graph graph_;
  ad::Expr loss_;
  std::vector<double> bound_;
};

inline TrainHistory fit_derivative(PhsModel& model, const std::vector<DerivativePair>& pairs, const TrainConfig& cfg) {
  if (cfg.augmented_dims > 0) {
    throw ConfigError("derivative fitting is not applicable with augmented states");
  }
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  TrainHistory hist;
  if (cfg.steps > 0 && pairs.empty()) throw ConfigError("derivative fitting needs at least one pair");
  if (cfg.steps == 0) {
    hist.final_params.assign(model.params().values().begin(), model.params().values().end());
    return hist;
  }
  const std::size_t batch = std::min(std::max<std::size_t>(cfg.batch_size, 1), pairs.size());
  DerivativeLoss loss(model, batch);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  std::vector<const DerivativePair*> chosen(batch);
  std::vector<double> grad(model.params().size());
  AdamState adam;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      chosen[b] = &pairs[order[cursor++]];
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const double value = loss.evaluate(chosen, grad);
    if (!std::isfinite(value)) {
      throw NumericalError("derivative fitting diverged: non-finite loss at step " + std::to_string(step));
    }
    adam_step(model.params().values(), grad, adam, cfg.learning_rate, cfg.adam);
    hist.loss.push_back(value);
    hist.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (cfg.on_step) cfg.on_step(step, value);
  }
  hist.final_params.assign(model.params().values().begin(), model.params().values().end());
  return hist;
}

namespace detail {

inline std::vector<std::size_t> observed_dims(const TrainConfig& cfg, std::size_t n) {
  if (cfg.augmented_dims >= n) throw ConfigError("augmented dimensions must leave at least one observed state");
  std::vector<std::size_t> obs = cfg.observed;
  if (obs.empty()) {
    obs.resize(n - cfg.augmented_dims);
    std::iota(obs.begin(), obs.end(), 0);
  }
  if (obs.size() + cfg.augmented_dims != n) {
    throw ConfigError("observed dimensions plus augmented dimensions must equal the model state dimension");
  }
  std::vector<char> seen(n, 0);
  for (auto i : obs) {
    if (i >= n || seen[i]) throw ConfigError("observed dimension indices must be distinct and < n");
    seen[i] = 1;
  }
  return obs;
}

}  // namespace detail

// Discretized rollout loss of one trajectory window: RK4 from the observed
// initial state (augmented states zero), squared error on observed dims at
// every later sample. Differentiable in the model parameters.
class RolloutLoss {
 public:
  RolloutLoss(const PhsModel& model, const Trajectory& window, std::span<const std::size_t> observed,
              std::size_t substeps, double weight, Interpolation interp = Interpolation::linear)
      : model_(&model) {
    const std::size_t n = model.state_dim();
    const std::size_t m = model.input_dim();
    const std::size_t len = window.size();
    if (len < 2) throw ConfigError("rollout window needs at least two samples");
    require_dim(window.state_dim(), observed.size(), "trajectory observed states");
    if (m > 0 && window.input_dim() != m) throw ConfigError("trajectory input channels do not match the model");
    if (substeps == 0) throw ConfigError("substeps must be >= 1");
    const InputSignal signal = m > 0 ? InputSignal::from_trajectory(window, interp) : InputSignal();

    const auto ctx = model.prepare(graph_);
    std::vector<ad::Expr> x(n, graph_.zero());
    std::size_t slot = 0;
    auto next_input = [&](double v) {
      bound_.push_back(v);
      return graph_.input(slot++);
    };
    for (std::size_t i = 0; i < observed.size(); ++i) x[observed[i]] = next_input(window.states[0][i]);

    std::vector<ad::Expr> squares;
    std::vector<double> ubuf(m);
    auto input_at = [&](double t, bool left) {
      std::vector<ad::Expr> u;
      if (left) {
        signal.eval_left(t, ubuf);
      } else {
        signal.eval(t, ubuf);
      }
      for (std::size_t j = 0; j < m; ++j) u.push_back(next_input(ubuf[j]));
      return u;
    };
    for (std::size_t k = 1; k < len; ++k) {
      const double t0 = window.times[k - 1];
      const double h = (window.times[k] - t0) / static_cast<double>(substeps);
      for (std::size_t s = 0; s < substeps; ++s) {
        const double t = t0 + static_cast<double>(s) * h;
        const auto u0 = input_at(t, false);
        const auto uh = input_at(t + 0.5 * h, true);
        const auto u1 = input_at(t + h, true);
        const auto k1 = model.build(graph_, ctx, x, u0).rhs;
        std::vector<ad::Expr> xs(n);
        for (std::size_t i = 0; i < n; ++i) xs[i] = graph_.affine(0.0, {1.0, 0.5 * h}, {x[i], k1[i]});
        const auto k2 = model.build(graph_, ctx, xs, uh).rhs;
        for (std::size_t i = 0; i < n; ++i) xs[i] = graph_.affine(0.0, {1.0, 0.5 * h}, {x[i], k2[i]});
        const auto k3 = model.build(graph_, ctx, xs, uh).rhs;
        for (std::size_t i = 0; i < n; ++i) xs[i] = graph_.affine(0.0, {1.0, h}, {x[i], k3[i]});
        const auto k4 = model.build(graph_, ctx, xs, u1).rhs;
        for (std::size_t i = 0; i < n; ++i) {
          x[i] = graph_.affine(0.0, {1.0, h / 6.0, h / 3.0, h / 3.0, h / 6.0}, {x[i], k1[i], k2[i], k3[i], k4[i]});
        }
      }
      for (std::size_t i = 0; i < observed.size(); ++i) {
        const ad::Expr target = next_input(window.states[k][i]);
        squares.push_back(graph_.square(x[observed[i]] - target));
      }
      predictions_.push_back(x);
    }
    count_ = squares.size();
    const std::vector<double> w(squares.size(), weight);
    loss_ = graph_.affine(0.0, w, squares);
  }

  // Number of squared-error terms in the window.
  std::size_t count() const { return count_; }
  std::size_t graph_size() const { return graph_.size(); }

  double evaluate(std::span<double> grad) {
    graph_.forward(bound_, model_->params().values());
    const double value = graph_.value(loss_);
    if (!grad.empty() && std::isfinite(value)) graph_.backward(loss_, {}, grad);
    return value;
  }

 private:
  const PhsModel* model_;
  ad::Graph graph_;
  ad::Expr loss_;
  std::vector<double> bound_;
  std::vector<std::vector<ad::Expr>> predictions_;
  std::size_t count_ = 0;
};

// Splits trajectories into windows of `length` samples that share their end
// points; length 0 keeps every trajectory whole.
inline std::vector<Trajectory> rollout_windows(const std::vector<Trajectory>& trajs, std::size_t length) {
  std::vector<Trajectory> out;
  for (const auto& tr : trajs) {
    if (length == 0 || length >= tr.size()) {
      out.push_back(tr);
      continue;
    }
    if (length < 2) throw ConfigError("rollout length must be >= 2");
    for (std::size_t start = 0; start + 1 < tr.size(); start += length - 1) {
      const std::size_t end = std::min(start + length, tr.size());
      Trajectory w;
      w.state_names = tr.state_names;
      w.input_names = tr.input_names;
      for (std::size_t k = start; k < end; ++k) {
        w.times.push_back(tr.times[k]);
        w.states.push_back(tr.states[k]);
        if (tr.has_inputs()) w.inputs.push_back(tr.inputs[k]);
      }
      if (w.size() >= 2) out.push_back(std::move(w));
    }
  }
  return out;
}

// Rollout losses over a set of trajectories, normalized to the MSE over all
// observed entries.
class TrajectoryObjective {
 public:
  TrajectoryObjective(const PhsModel& model, const std::vector<Trajectory>& trajs, const TrainConfig& cfg) {
    const std::size_t n = model.state_dim();
    const auto observed = detail::observed_dims(cfg, n);
    if (trajs.empty()) throw ConfigError("trajectory fitting needs at least one trajectory");
    double dt = 0.0;
    for (const auto& tr : trajs) {
      tr.validate();
      if (tr.size() < 2) throw ConfigError("trajectories need at least two samples");
      require_dim(tr.state_dim(), observed.size(), "trajectory states");
      for (std::size_t k = 1; k < tr.size(); ++k) {
        const double d = tr.times[k] - tr.times[k - 1];
        if (dt == 0.0) dt = d;
        if (std::abs(d - dt) > 1e-9 * dt) throw ConfigError("trajectories must share one uniform sampling interval");
      }
    }
    const auto windows = rollout_windows(trajs, cfg.rollout_length);
    std::size_t total = 0;
    for (const auto& w : windows) total += (w.size() - 1) * observed.size();
    const double weight = 1.0 / static_cast<double>(total);
    for (const auto& w : windows) {
      losses_.push_back(std::make_unique<RolloutLoss>(model, w, observed, cfg.substeps, weight, cfg.interpolation));
    }
    grads_.assign(losses_.size(), std::vector<double>(model.params().size(), 0.0));
    values_.assign(losses_.size(), 0.0);
    threads_ = std::max<std::size_t>(1, cfg.threads);
  }

  std::size_t windows() const { return losses_.size(); }

  // Total loss; adds its parameter gradient to grad when non-empty. Throws
  // NumericalError naming the first window with a non-finite loss.
  double evaluate(std::span<double> grad, std::size_t step = 0) {
    const bool want_grad = !grad.empty();
    auto run = [&](std::size_t w) {
      auto& g = grads_[w];
      if (want_grad) std::fill(g.begin(), g.end(), 0.0);
      values_[w] = losses_[w]->evaluate(want_grad ? std::span<double>(g) : std::span<double>());
    };
    const std::size_t workers = std::min(threads_, losses_.size());
    if (workers <= 1) {
      for (std::size_t w = 0; w < losses_.size(); ++w) run(w);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
          for (std::size_t w = t; w < losses_.size(); w += workers) run(w);
        });
      }
      for (auto& th : pool) th.join();
    }
    double total = 0.0;
    for (std::size_t w = 0; w < losses_.size(); ++w) {
      if (!std::isfinite(values_[w])) {
        throw NumericalError("trajectory fitting diverged at step " + std::to_string(step) +
                             ": non-finite loss on trajectory window " + std::to_string(w));
      }
      total += values_[w];
      if (want_grad) {
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grads_[w][i];
      }
    }
    return total;
  }

 private:
  std::vector<std::unique_ptr<RolloutLoss>> losses_;
  std::vector<std::vector<double>> grads_;
  std::vector<double> values_;
  std::size_t threads_ = 1;
};

inline TrainHistory fit_trajectory(PhsModel& model, const std::vector<Trajectory>& trajs, const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  TrainHistory hist;
  if (cfg.steps == 0) {
    detail::observed_dims(cfg, model.state_dim());
    hist.final_params.assign(model.params().values().begin(), model.params().values().end());
    return hist;
  }
  TrajectoryObjective objective(model, trajs, cfg);
  std::vector<double> grad(model.params().size());
  AdamState adam;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto start = std::chrono::steady_clock::now();
    std::fill(grad.begin(), grad.end(), 0.0);
    const double value = objective.evaluate(grad, step);
    adam_step(model.params().values(), grad, adam, cfg.learning_rate, cfg.adam);
    hist.loss.push_back(value);
    hist.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    if (cfg.on_step) cfg.on_step(step, value);
  }
  hist.final_params.assign(model.params().values().begin(), model.params().values().end());
  return hist;
}

inline TrainHistory train(PhsModel& model, const std::vector<Trajectory>& trajs,
                          const std::vector<DerivativePair>& pairs, const TrainConfig& cfg) {
  return cfg.regime == Regime::derivative ? fit_derivative(model, pairs, cfg) : fit_trajectory(model, trajs, cfg);
}

}  // namespace sphnn
