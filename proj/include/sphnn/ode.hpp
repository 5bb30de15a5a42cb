#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sphnn/errors.hpp"
#include "sphnn/phs.hpp"
#include "sphnn/trajectory.hpp"

namespace sphnn {

enum class Interpolation { linear, zero_order_hold };

// Time-dependent input u(t) given by samples. Evaluation clamps to the end
// values outside the sampled range. A default-constructed signal has
// dimension zero.
class InputSignal {
 public:
  InputSignal() = default;
  InputSignal(std::vector<double> times, std::vector<std::vector<double>> values,
              Interpolation mode = Interpolation::linear)
      : times_(std::move(times)), values_(std::move(values)), mode_(mode) {
    if (times_.empty()) throw ConfigError("input signal needs at least one sample");
    require_dim(values_.size(), times_.size(), "input signal samples");
    dim_ = values_.front().size();
    for (std::size_t k = 0; k < times_.size(); ++k) {
      if (k > 0 && !(times_[k] > times_[k - 1])) throw ConfigError("input signal times must be strictly increasing");
      require_dim(values_[k].size(), dim_, "input signal sample");
    }
  }

  static InputSignal from_trajectory(const Trajectory& traj, Interpolation mode = Interpolation::linear) {
    if (!traj.has_inputs()) return {};
    return InputSignal(traj.times, traj.inputs, mode);
  }

  std::size_t dim() const { return dim_; }
  Interpolation mode() const { return mode_; }

  void eval(double t, std::span<double> out) const {
    require_dim(out.size(), dim_, "input signal output");
    if (dim_ == 0) return;
    if (t <= times_.front()) {
      std::copy(values_.front().begin(), values_.front().end(), out.begin());
      return;
    }
    if (t >= times_.back()) {
      std::copy(values_.back().begin(), values_.back().end(), out.begin());
      return;
    }
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    const std::size_t lo = hi - 1;
    if (mode_ == Interpolation::zero_order_hold) {
      std::copy(values_[lo].begin(), values_[lo].end(), out.begin());
      return;
    }
    const double w = (t - times_[lo]) / (times_[hi] - times_[lo]);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = (1.0 - w) * values_[lo][i] + w * values_[hi][i];
  }

  // Limit from the left. Differs from eval() only at the switching instants
  // of a zero-order hold; integrator stages inside (t, t + h] use it so that a
  // held input stays constant over a step that ends on a switch.
  void eval_left(double t, std::span<double> out) const {
    if (mode_ != Interpolation::zero_order_hold || dim_ == 0 || t <= times_.front() || t > times_.back()) {
      eval(t, out);
      return;
    }
    require_dim(out.size(), dim_, "input signal output");
    const auto it = std::lower_bound(times_.begin(), times_.end(), t);
    const std::size_t lo = static_cast<std::size_t>(it - times_.begin()) - 1;
    std::copy(values_[lo].begin(), values_[lo].end(), out.begin());
  }

  std::vector<double> operator()(double t) const {
    std::vector<double> u(dim_);
    eval(t, u);
    return u;
  }

 private:
  std::vector<double> times_;
  std::vector<std::vector<double>> values_;
  Interpolation mode_ = Interpolation::linear;
  std::size_t dim_ = 0;
};

// ẋ = f(x, u)
using VectorField = std::function<void(std::span<const double> x, std::span<const double> u, std::span<double> dxdt)>;

enum class Method { rk4_fixed, tsit5_adaptive };

struct IntegrationConfig {
  Method method = Method::tsit5_adaptive;
  double step = 0.01;  // rk4_fixed step
  double rtol = 1e-6;
  double atol = 1e-8;
  std::size_t max_steps = 10'000'000;
};

namespace detail {

inline void require_finite(std::span<const double> x, double t) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericalError("non-finite state at t = " + std::to_string(t));
  }
}

// Tsitouras 5(4) coefficients. b equals the last row of a (FSAL); btilde is
// the difference between the 5th and embedded 4th order weights.
struct Tsit5Tableau {
  static constexpr std::array<double, 7> c{0.0, 0.161, 0.327, 0.9, 0.9800255409045097, 1.0, 1.0};
  static constexpr double a21 = 0.161;
  static constexpr double a31 = -0.008480655492356989, a32 = 0.335480655492357;
  static constexpr double a41 = 2.897153057105493, a42 = -6.359448489975075, a43 = 4.3622954328695815;
  static constexpr double a51 = 5.325864828439257, a52 = -11.748883564062828, a53 = 7.4955393428898365,
                          a54 = -0.09249506636175525;
  static constexpr double a61 = 5.86145544294642, a62 = -12.92096931784711, a63 = 8.159367898576159,
                          a64 = -0.071584973281401, a65 = -0.028269050394068383;
  static constexpr std::array<double, 6> b{0.09646076681806523, 0.01, 0.4798896504144996,
                                           1.379008574103742, -3.290069515436081, 2.324710524099774};
  static constexpr std::array<double, 7> btilde{-0.00178001105222577714, -0.0008164344596567469,
                                                0.007880878010261995,    -0.1447110071732629,
                                                0.5823571654525552,      -0.45808210592918697,
                                                0.015151515151515152};
};

}  // namespace detail

// One classical Runge-Kutta step of size h from (t, x).
inline std::vector<double> rk4_step(const VectorField& f, double t, std::span<const double> x, double h,
                                    const InputSignal& u = {}) {
  if (!(h > 0.0)) throw ConfigError("rk4 step size must be > 0");
  const std::size_t n = x.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), u0(u.dim()), uh(u.dim()), u1(u.dim());
  u.eval(t, u0);
  u.eval_left(t + 0.5 * h, uh);
  u.eval_left(t + h, u1);
  f(x, u0, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  f(tmp, uh, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  f(tmp, uh, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  f(tmp, u1, k4);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  detail::require_finite(out, t + h);
  return out;
}

namespace detail {

class Tsit5Stepper {
 public:
  Tsit5Stepper(const VectorField& f, const InputSignal& u, const IntegrationConfig& cfg, std::size_t n)
      : f_(f), u_(u), cfg_(cfg), n_(n) {
    for (auto& k : k_) k.resize(n);
    tmp_.resize(n);
    xnew_.resize(n);
    err_.resize(n);
    ubuf_.resize(u.dim());
  }

  void field(double t, std::span<const double> x, std::span<double> out, bool left = false) {
    if (left) {
      u_.eval_left(t, ubuf_);
    } else {
      u_.eval(t, ubuf_);
    }
    f_(x, ubuf_, out);
  }

  double initial_step(double t, std::span<const double> x, double span_len) {
    field(t, x, k_[0]);
    have_k1_ = true;
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double sc = cfg_.atol + cfg_.rtol * std::abs(x[i]);
      d0 += (x[i] / sc) * (x[i] / sc);
      d1 += (k_[0][i] / sc) * (k_[0][i] / sc);
    }
    d0 = std::sqrt(d0 / static_cast<double>(n_));
    d1 = std::sqrt(d1 / static_cast<double>(n_));
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span_len);
    for (std::size_t i = 0; i < n_; ++i) tmp_[i] = x[i] + h0 * k_[0][i];
    field(t + h0, tmp_, k_[1]);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double sc = cfg_.atol + cfg_.rtol * std::abs(x[i]);
      const double v = (k_[1][i] - k_[0][i]) / sc;
      d2 += v * v;
    }
    d2 = std::sqrt(d2 / static_cast<double>(n_)) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / 5.0);
    return std::min(100.0 * h0, h1);
  }

  // Attempts a step; on acceptance x is advanced and true is returned. h is
  // updated to the proposal for the next attempt either way.
  bool attempt(double t, std::vector<double>& x, double& h) {
    using T = Tsit5Tableau;
    if (!have_k1_) {
      field(t, x, k_[0]);
      have_k1_ = true;
    }
    auto stage = [&](std::size_t s, std::initializer_list<double> coeffs) {
      for (std::size_t i = 0; i < n_; ++i) {
        double acc = 0.0;
        std::size_t j = 0;
        for (double a : coeffs) acc += a * k_[j++][i];
        tmp_[i] = x[i] + h * acc;
      }
      field(t + T::c[s] * h, tmp_, k_[s], true);
    };
    stage(1, {T::a21});
    stage(2, {T::a31, T::a32});
    stage(3, {T::a41, T::a42, T::a43});
    stage(4, {T::a51, T::a52, T::a53, T::a54});
    stage(5, {T::a61, T::a62, T::a63, T::a64, T::a65});
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 6; ++j) acc += T::b[j] * k_[j][i];
      xnew_[i] = x[i] + h * acc;
    }
    bool finite = std::all_of(xnew_.begin(), xnew_.end(), [](double v) { return std::isfinite(v); });
    double norm = std::numeric_limits<double>::infinity();
    if (finite) {
      field(t + h, xnew_, k_[6], true);
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        double e = 0.0;
        for (std::size_t j = 0; j < 7; ++j) e += T::btilde[j] * k_[j][i];
        e *= h;
        const double sc = cfg_.atol + cfg_.rtol * std::max(std::abs(x[i]), std::abs(xnew_[i]));
        s += (e / sc) * (e / sc);
      }
      norm = std::sqrt(s / static_cast<double>(n_));
      if (!std::isfinite(norm)) finite = false;
    }

    constexpr double safety = 0.9, fac_min = 0.2, fac_max = 5.0, beta = 0.04, expo = 0.2 - 0.75 * beta;
    if (finite && norm <= 1.0) {
      const double fac = norm == 0.0 ? fac_max
                                     : std::clamp(safety * std::pow(norm, -expo) * std::pow(prev_norm_, beta),
                                                  fac_min, fac_max);
      prev_norm_ = std::max(norm, 1e-4);
      x.swap(xnew_);
      std::swap(k_[0], k_[6]);
      // the last stage saw the left limit; a held input may switch here
      if (u_.dim() > 0 && u_.mode() == Interpolation::zero_order_hold) have_k1_ = false;
      h *= fac;
      return true;
    }
    const double fac = finite ? std::max(fac_min, safety * std::pow(norm, -0.2)) : fac_min;
    h *= fac;
    return false;
  }

 private:
  const VectorField& f_;
  const InputSignal& u_;
  const IntegrationConfig& cfg_;
  std::size_t n_;
  std::array<std::vector<double>, 7> k_;
  std::vector<double> tmp_, xnew_, err_, ubuf_;
  double prev_norm_ = 1e-4;
  bool have_k1_ = false;
};

}  // namespace detail

// States at every requested time. Adaptive mode clips steps so each
// requested time is hit exactly; fixed mode needs grid spacings that are
// integer multiples of cfg.step.
inline Trajectory integrate(const VectorField& f, std::span<const double> x0, std::span<const double> t_eval,
                            const InputSignal& u, const IntegrationConfig& cfg) {
  if (t_eval.empty()) throw ConfigError("integrate: empty time grid");
  for (std::size_t k = 1; k < t_eval.size(); ++k) {
    if (!(t_eval[k] > t_eval[k - 1])) throw ConfigError("integrate: time grid must be strictly increasing");
  }
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) throw ConfigError("integrate: tolerances must be > 0");
  detail::require_finite(x0, t_eval[0]);

  Trajectory out;
  out.times.assign(t_eval.begin(), t_eval.end());
  out.states.reserve(t_eval.size());
  out.state_names = default_names("x", x0.size());
  if (u.dim() > 0) out.input_names = default_names("u", u.dim());
  std::vector<double> x(x0.begin(), x0.end());
  out.states.push_back(x);
  std::size_t steps = 0;

  if (cfg.method == Method::rk4_fixed) {
    if (!(cfg.step > 0.0)) throw ConfigError("integrate: step size must be > 0");
    for (std::size_t k = 1; k < t_eval.size(); ++k) {
      const double dt = t_eval[k] - t_eval[k - 1];
      const double ratio = dt / cfg.step;
      const double sub = std::round(ratio);
      if (sub < 1.0 || std::abs(ratio - sub) > 1e-9 * std::max(1.0, ratio)) {
        throw ConfigError("integrate: grid spacing " + std::to_string(dt) +
                          " is not an integer multiple of the step " + std::to_string(cfg.step));
      }
      const auto count = static_cast<std::size_t>(sub);
      const double h = dt / sub;
      for (std::size_t s = 0; s < count; ++s) {
        if (++steps > cfg.max_steps) throw NumericalError("integrate: maximum number of steps exceeded");
        x = rk4_step(f, t_eval[k - 1] + static_cast<double>(s) * h, x, h, u);
      }
      out.states.push_back(x);
    }
  } else {
    detail::Tsit5Stepper stepper(f, u, cfg, x.size());
    double t = t_eval[0];
    double h = t_eval.size() > 1 ? stepper.initial_step(t, x, t_eval.back() - t) : 0.0;
    for (std::size_t k = 1; k < t_eval.size(); ++k) {
      const double target = t_eval[k];
      while (t < target) {
        if (++steps > cfg.max_steps) throw NumericalError("integrate: maximum number of steps exceeded");
        const double remaining = target - t;
        const bool clipped = h >= remaining * (1.0 - 1e-12);
        double step = clipped ? remaining : h;
        const double proposal = h;
        if (stepper.attempt(t, x, step)) {
          t = clipped ? target : t + (proposal);
          h = clipped ? std::max(step, proposal) : step;
        } else {
          h = step;
          if (h < 1e-14 * std::max(1.0, std::abs(t))) {
            throw NumericalError("integrate: step size underflow at t = " + std::to_string(t));
          }
        }
      }
      detail::require_finite(x, target);
      out.states.push_back(x);
    }
  }

  if (u.dim() > 0) {
    for (double t : out.times) out.inputs.push_back(u(t));
  }
  return out;
}

// Right-hand side of a model as a VectorField. The returned callable shares
// one Evaluator; do not use it from several threads at once.
inline VectorField model_field(const PhsModel& model) {
  auto ev = std::make_shared<Evaluator>(model);
  return [ev](std::span<const double> x, std::span<const double> u, std::span<double> dx) { ev->rhs(x, u, dx); };
}

}  // namespace sphnn
