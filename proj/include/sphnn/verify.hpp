#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sphnn/errors.hpp"
#include "sphnn/linalg.hpp"
#include "sphnn/ode.hpp"
#include "sphnn/phs.hpp"
#include "sphnn/trajectory.hpp"

namespace sphnn {

enum class Verdict { certified_global_asymptotic, certified_stable_bounded, not_certified };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::certified_global_asymptotic:
      return "certified_global_asymptotic";
    case Verdict::certified_stable_bounded:
      return "certified_stable_bounded";
    case Verdict::not_certified:
      return "not_certified";
  }
  return "?";
}

struct VerifyConfig {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
  double box = 3.0;  // half-width of the sample box around x*
  double hessian_tol = 1e-8;
  double normalization_tol = 1e-10;
  double skew_tol = 1e-10;
  double r_tol = 1e-10;
  double convexity_slack = 1e-10;
};

struct StabilityReport {
  bool hessian_pd_at_xstar = false;
  double hessian_min_eigenvalue = 0.0;
  double hamiltonian_at_xstar = 0.0;
  double gradient_at_xstar = 0.0;  // ∞-norm
  bool normalized = false;
  double skewness_residual = 0.0;  // max ‖J+Jᵀ‖∞ over samples
  double r_min_eigenvalue = 0.0;   // min over samples
  Definiteness r_mode = Definiteness::strict;
  bool r_strict = false;
  bool r_psd = false;
  std::size_t convexity_violations = 0;
  std::size_t samples = 0;
  Verdict verdict = Verdict::not_certified;
  std::vector<std::string> notes;
};

// Checks the sufficient conditions for stability of x*: positive definite
// Hessian of ℋ at x*, ℋ(x*) = 0 and ∇ℋ(x*) = 0, skew J, PSD (or PD) R and
// convexity of ℋ. J, R and convexity are checked at sampled points; every
// counter is cumulative over the samples, so more samples can only revoke.
inline StabilityReport verify_stability(const PhsModel& model, const VerifyConfig& cfg = {}) {
  if (!is_phs(model.kind())) throw UnsupportedError("verify: the NODE model has no Hamiltonian");
  const std::size_t n = model.state_dim();
  const auto xs = model.xstar();
  StabilityReport rep;
  rep.r_mode = model.spec().r_definiteness;
  rep.samples = cfg.samples;

  Evaluator ev(model);
  ev.evaluate(xs);
  rep.hamiltonian_at_xstar = ev.hamiltonian();
  rep.gradient_at_xstar = max_abs(ev.gradient());
  rep.normalized = std::abs(rep.hamiltonian_at_xstar) <= cfg.normalization_tol &&
                   rep.gradient_at_xstar <= cfg.normalization_tol;
  if (!rep.normalized) rep.notes.push_back("H(x*) or grad H(x*) is not zero");

  const Matrix hess = hamiltonian_hessian(model, xs);
  rep.hessian_min_eigenvalue = min_eigenvalue(hess);
  rep.hessian_pd_at_xstar = rep.hessian_min_eigenvalue > cfg.hessian_tol && cholesky(hess).has_value();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-cfg.box, cfg.box);
  auto draw = [&] {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = xs[i] + dist(rng);
    return x;
  };

  rep.r_min_eigenvalue = std::numeric_limits<double>::infinity();
  std::vector<double> mid(n);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    const auto x = draw();
    rep.skewness_residual = std::max(rep.skewness_residual, skew_residual(ev.structure_matrix(x)));
    const Matrix r = ev.dissipation_matrix(x);
    rep.r_min_eigenvalue = std::min(rep.r_min_eigenvalue, min_eigenvalue(r));

    const auto a = draw();
    const auto b = draw();
    for (std::size_t i = 0; i < n; ++i) mid[i] = 0.5 * (a[i] + b[i]);
    ev.evaluate(a);
    const double ha = ev.hamiltonian();
    ev.evaluate(b);
    const double hb = ev.hamiltonian();
    ev.evaluate(mid);
    const double hm = ev.hamiltonian();
    if (!(hm <= 0.5 * (ha + hb) + cfg.convexity_slack)) ++rep.convexity_violations;
  }
  if (cfg.samples == 0) rep.r_min_eigenvalue = min_eigenvalue(ev.dissipation_matrix(xs));

  const bool skew_ok = rep.skewness_residual <= cfg.skew_tol;
  rep.r_psd = rep.r_min_eigenvalue >= -cfg.r_tol;
  rep.r_strict = rep.r_mode == Definiteness::strict && rep.r_min_eigenvalue > cfg.r_tol;

  if (is_sphnn(model.kind())) {
    rep.notes.push_back("convexity guaranteed by construction (sampled as a regression check)");
    rep.notes.push_back("normalization guaranteed by construction");
  } else {
    rep.notes.push_back("convexity and normalization sampled only");
  }
  if (rep.r_mode == Definiteness::strict) {
    rep.notes.push_back("R positive definite by construction (Cholesky factor with positive diagonal)");
  }
  if (model.spec().j_mode != MatrixMode::state_dependent) rep.notes.push_back("J skew by construction");
  if (!skew_ok) rep.notes.push_back("J fails skew-symmetry");
  if (!rep.r_psd) rep.notes.push_back("R has a negative eigenvalue");
  if (rep.convexity_violations > 0) rep.notes.push_back("H violates midpoint convexity");
  if (!rep.hessian_pd_at_xstar) rep.notes.push_back("Hessian of H at x* is not positive definite");

  const bool bounded = rep.normalized && rep.hessian_pd_at_xstar && skew_ok && rep.r_psd &&
                       rep.convexity_violations == 0;
  rep.verdict = !bounded        ? Verdict::not_certified
                : rep.r_strict ? Verdict::certified_global_asymptotic
                               : Verdict::certified_stable_bounded;
  return rep;
}

inline StabilityReport verify_stability(const PhsModel& model, std::size_t samples, std::uint64_t seed) {
  VerifyConfig cfg;
  cfg.samples = samples;
  cfg.seed = seed;
  return verify_stability(model, cfg);
}

struct EnergyAudit {
  double max_residual = 0.0;  // energy-balance residual, max over samples
  bool unforced = true;
  std::size_t increase_violations = 0;  // only counted when unforced
  double max_increase = 0.0;
  std::vector<double> energy;
};

// dℋ/dt = ∇ℋᵀ rhs must equal −∇ℋᵀR∇ℋ + s(x, u) at every sample; for zero
// input ℋ must not increase between samples.
inline EnergyAudit energy_audit(const PhsModel& model, const Trajectory& traj, const InputSignal& u = {},
                                double tol = 1e-7) {
  if (!is_phs(model.kind())) throw UnsupportedError("energy audit: the NODE model has no Hamiltonian");
  EnergyAudit out;
  Evaluator ev(model);
  std::vector<double> uk(u.dim());
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (u.dim() > 0) {
      u.eval(traj.times[k], uk);
      for (double v : uk) out.unforced = out.unforced && v == 0.0;
    }
    const auto& x = traj.states[k];
    ev.evaluate(x, uk);
    const auto grad = ev.gradient();
    const double lhs = dot(grad, ev.rhs());
    const Matrix r = ev.dissipation_matrix(x);
    const double rhs = -dot(grad, matvec(r, grad)) + ev.supply_rate();
    out.max_residual = std::max(out.max_residual, std::abs(lhs - rhs));
    out.energy.push_back(ev.hamiltonian());
  }
  if (out.unforced) {
    for (std::size_t k = 1; k < out.energy.size(); ++k) {
      const double inc = out.energy[k] - out.energy[k - 1];
      out.max_increase = std::max(out.max_increase, inc);
      if (inc > tol) ++out.increase_violations;
    }
  }
  return out;
}

struct ProbeConfig {
  double radius = 10.0;
  double horizon = 100.0;
  double dt = 0.5;  // sample spacing
  std::size_t directions = 8;
  std::uint64_t seed = 0;
  double bound_tol = 1e-6;     // ℋ(x(t)) ≤ ℋ(x₀) + bound_tol
  double increase_tol = 1e-7;  // between consecutive samples
  IntegrationConfig integration{Method::tsit5_adaptive, 0.01, 1e-10, 1e-12, 10'000'000};
};

struct ProbeResult {
  bool passed = true;
  std::size_t runs = 0;
  std::size_t bound_violations = 0;
  std::size_t increase_violations = 0;
  double max_increase = 0.0;
  double max_distance = 0.0;    // max ‖x(t) − x*‖ over all runs
  double final_distance = 0.0;  // max ‖x(T) − x*‖ over runs
  std::vector<std::string> failures;
};

// Unforced rollouts from random points at distance `radius` from x*. The
// energy checks are skipped for the NODE, which has no Hamiltonian.
inline ProbeResult boundedness_probe(const PhsModel& model, const ProbeConfig& cfg = {}) {
  const std::size_t n = model.state_dim();
  const auto xs = model.xstar();
  const bool phs = is_phs(model.kind());
  std::vector<double> times;
  for (double t = 0.0; t <= cfg.horizon * (1.0 + 1e-12); t += cfg.dt) times.push_back(t);
  if (times.size() < 2) throw ConfigError("boundedness probe: horizon shorter than one sample interval");

  ProbeResult out;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  const auto field = model_field(model);
  Evaluator ev(model);
  for (std::size_t d = 0; d < cfg.directions; ++d) {
    std::vector<double> dir(n);
    double nrm = 0.0;
    while (nrm < 1e-12) {
      for (auto& v : dir) v = normal(rng);
      nrm = norm2(dir);
    }
    std::vector<double> x0(n);
    for (std::size_t i = 0; i < n; ++i) x0[i] = xs[i] + cfg.radius * dir[i] / nrm;
    ++out.runs;

    Trajectory traj;
    try {
      traj = integrate(field, x0, times, {}, cfg.integration);
    } catch (const NumericalError& e) {
      out.passed = false;
      out.failures.push_back("direction " + std::to_string(d) + ": " + e.what());
      continue;
    }
    std::vector<double> diff(n);
    for (const auto& x : traj.states) {
      for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - xs[i];
      out.max_distance = std::max(out.max_distance, norm2(diff));
    }
    out.final_distance = std::max(out.final_distance, norm2(diff));
    if (!phs) continue;

    ev.evaluate(x0);
    const double h0 = ev.hamiltonian();
    double prev = h0;
    for (std::size_t k = 1; k < traj.size(); ++k) {
      ev.evaluate(traj.states[k]);
      const double h = ev.hamiltonian();
      if (h > h0 + cfg.bound_tol) ++out.bound_violations;
      out.max_increase = std::max(out.max_increase, h - prev);
      if (h - prev > cfg.increase_tol) ++out.increase_violations;
      prev = h;
    }
  }
  if (out.bound_violations > 0 || out.increase_violations > 0) {
    out.passed = false;
    out.failures.push_back("energy increased along an unforced trajectory");
  }
  return out;
}

inline void require_aligned(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) {
    throw DataError("grids differ in length: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::abs(a.times[k] - b.times[k]) > 1e-9 * std::max(1.0, std::abs(a.times[k]))) {
      throw DataError("grids differ at sample " + std::to_string(k));
    }
  }
}

// Root mean squared error over the selected dims (all when empty).
inline double rmse(const Trajectory& pred, const Trajectory& truth, std::vector<std::size_t> dims = {}) {
  require_aligned(pred, truth);
  if (dims.empty()) {
    for (std::size_t i = 0; i < truth.state_dim(); ++i) dims.push_back(i);
  }
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    for (std::size_t i : dims) {
      if (i >= truth.state_dim() || i >= pred.state_dim()) {
        throw ConfigError("rmse: dim " + std::to_string(i) + " out of range");
      }
      const double e = pred.states[k][i] - truth.states[k][i];
      s += e * e;
      ++count;
    }
  }
  return count ? std::sqrt(s / static_cast<double>(count)) : 0.0;
}

}  // namespace sphnn
