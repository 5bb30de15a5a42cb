#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "sphnn/errors.hpp"
#include "sphnn/linalg.hpp"
#include "sphnn/ode.hpp"
#include "sphnn/trajectory.hpp"

namespace sphnn {

// A state with its time derivative (and the input acting at that moment).
struct DerivativePair {
  std::vector<double> x;
  std::vector<double> dxdt;
  std::vector<double> u;
};

// Euler's rotation equations I ω̇ + ω × (I ω) = -μ ω, solved for ω̇.
inline std::vector<double> euler_rhs(std::span<const double> omega, std::span<const double> inertia, double mu) {
  require_dim(omega.size(), 3, "euler_rhs omega");
  require_dim(inertia.size(), 3, "euler_rhs inertia");
  const double l0 = inertia[0] * omega[0];
  const double l1 = inertia[1] * omega[1];
  const double l2 = inertia[2] * omega[2];
  // ω × (I ω)
  const double c0 = omega[1] * l2 - omega[2] * l1;
  const double c1 = omega[2] * l0 - omega[0] * l2;
  const double c2 = omega[0] * l1 - omega[1] * l0;
  return {(-c0 - mu * omega[0]) / inertia[0], (-c1 - mu * omega[1]) / inertia[1],
          (-c2 - mu * omega[2]) / inertia[2]};
}

// Kinetic energy ½ Σ I_i ω_i².
inline double rigid_energy(std::span<const double> omega, std::span<const double> inertia) {
  require_dim(inertia.size(), omega.size(), "rigid_energy");
  double e = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) e += 0.5 * inertia[i] * omega[i] * omega[i];
  return e;
}

struct SpinningBodyConfig {
  std::array<double, 3> inertia{1.0, 2.0, 3.0};
  double mu = 0.01;
  std::size_t trajectories = 10;
  double duration = 50.0;
  double dt = 0.1;
  std::uint64_t seed = 0;
};

struct SpinningBodyData {
  std::vector<Trajectory> trajectories;
  std::vector<DerivativePair> pairs;  // exact ω̇ at every sample
};

inline std::vector<double> uniform_grid(double duration, double dt) {
  if (!(dt > 0.0)) throw ConfigError("sampling interval must be > 0");
  const auto count = static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
  std::vector<double> t(count);
  for (std::size_t k = 0; k < count; ++k) t[k] = static_cast<double>(k) * dt;
  return t;
}

// Reference solutions use tolerances well below any model evaluation.
inline IntegrationConfig reference_tolerances() {
  IntegrationConfig cfg;
  cfg.method = Method::tsit5_adaptive;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-12;
  return cfg;
}

// Spinning rigid body trajectory from a given initial angular velocity.
inline Trajectory simulate_spinning_body(std::span<const double> omega0, const SpinningBodyConfig& cfg) {
  const std::array<double, 3> inertia = cfg.inertia;
  const double mu = cfg.mu;
  VectorField f = [inertia, mu](std::span<const double> x, std::span<const double>, std::span<double> dx) {
    const auto d = euler_rhs(x, inertia, mu);
    std::copy(d.begin(), d.end(), dx.begin());
  };
  const auto times = uniform_grid(cfg.duration, cfg.dt);
  auto traj = integrate(f, omega0, times, {}, reference_tolerances());
  traj.state_names = default_names("x", 3);
  return traj;
}

// Trajectories from initial conditions drawn uniformly in [0, 1]³.
inline SpinningBodyData gen_spinning_body(const SpinningBodyConfig& cfg) {
  for (double i : cfg.inertia) {
    if (!(i > 0.0)) throw ConfigError("inertia entries must be > 0");
  }
  if (cfg.mu < 0.0) throw ConfigError("damping mu must be >= 0");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  SpinningBodyData data;
  for (std::size_t k = 0; k < cfg.trajectories; ++k) {
    std::array<double, 3> w0{dist(rng), dist(rng), dist(rng)};
    auto traj = simulate_spinning_body(w0, cfg);
    for (const auto& x : traj.states) data.pairs.push_back({x, euler_rhs(x, cfg.inertia, cfg.mu), {}});
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

// ẋ = A x + B u
inline VectorField linear_field(Matrix a, Matrix b) {
  require_dim(a.cols(), a.rows(), "linear system A");
  if (b.cols() > 0) require_dim(b.rows(), a.rows(), "linear system B");
  return [a = std::move(a), b = std::move(b)](std::span<const double> x, std::span<const double> u,
                                              std::span<double> dx) {
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
      for (std::size_t j = 0; j < b.cols() && j < u.size(); ++j) s += b(i, j) * u[j];
      dx[i] = s;
    }
  };
}

// Single-channel square wave of the given period, alternating +amplitude and
// -amplitude, sampled on `times`.
inline InputSignal square_wave(std::span<const double> times, double period, double amplitude) {
  std::vector<std::vector<double>> values;
  for (double t : times) {
    const double phase = std::fmod(t, period) / period;
    values.push_back({phase < 0.5 ? amplitude : -amplitude});
  }
  return InputSignal({times.begin(), times.end()}, values, Interpolation::zero_order_hold);
}

// Integrates a reference system at tight tolerances and samples it.
inline Trajectory simulate(const VectorField& f, std::span<const double> x0, std::span<const double> times,
                           const InputSignal& u = {}) {
  return integrate(f, x0, times, u, reference_tolerances());
}

// Derivative pairs sampled from a trajectory through a known vector field.
inline std::vector<DerivativePair> derivative_pairs(const VectorField& f, const Trajectory& traj) {
  std::vector<DerivativePair> pairs;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    DerivativePair p{traj.states[k], std::vector<double>(traj.state_dim()), {}};
    if (traj.has_inputs()) p.u = traj.inputs[k];
    f(p.x, p.u, p.dxdt);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// CSV: header "t,x1,...,xn[,u1,...,um]", one row per sample, 17 significant
// digits. Columns whose name starts with 'u' are inputs and follow the states.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const Trajectory& traj) {
  os << 't';
  const auto snames = traj.state_names.size() == traj.state_dim() ? traj.state_names
                                                                    : default_names("x", traj.state_dim());
  const auto inames = traj.input_names.size() == traj.input_dim() ? traj.input_names
                                                                    : default_names("u", traj.input_dim());
  for (const auto& s : snames) os << ',' << s;
  for (const auto& s : inames) os << ',' << s;
  os << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << format_double(traj.times[k]);
    for (double v : traj.states[k]) os << ',' << format_double(v);
    if (traj.has_inputs()) {
      for (double v : traj.inputs[k]) os << ',' << format_double(v);
    }
    os << '\n';
  }
}

inline void save_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_csv(os, traj);
  if (!os) throw DataError("failed writing '" + path + "'");
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_cell(const std::string& cell, std::size_t line_no, const std::string& source) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  if (begin < end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw DataError(source + ":" + std::to_string(line_no) + ": cannot parse '" + cell + "' as a number");
  }
  if (!std::isfinite(v)) throw DataError(source + ":" + std::to_string(line_no) + ": non-finite value '" + cell + "'");
  return v;
}

}  // namespace detail

inline Trajectory read_csv(std::istream& is, const std::string& source = "<csv>") {
  std::string line;
  if (!std::getline(is, line)) throw DataError(source + ":1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "t") throw DataError(source + ":1: first column must be 't'");
  Trajectory traj;
  bool in_inputs = false;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name.empty()) throw DataError(source + ":1: empty column name");
    if (name[0] == 'u') {
      in_inputs = true;
      traj.input_names.push_back(name);
    } else {
      if (in_inputs) throw DataError(source + ":1: state column '" + name + "' after input columns");
      traj.state_names.push_back(name);
    }
  }
  const std::size_t n = traj.state_names.size();
  const std::size_t m = traj.input_names.size();
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " columns, found " + std::to_string(cells.size()));
    }
    const double t = detail::parse_cell(cells[0], line_no, source);
    if (!traj.times.empty() && !(t > traj.times.back())) {
      throw DataError(source + ":" + std::to_string(line_no) + ": time is not strictly increasing");
    }
    traj.times.push_back(t);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = detail::parse_cell(cells[1 + i], line_no, source);
    traj.states.push_back(std::move(x));
    if (m > 0) {
      std::vector<double> u(m);
      for (std::size_t i = 0; i < m; ++i) u[i] = detail::parse_cell(cells[1 + n + i], line_no, source);
      traj.inputs.push_back(std::move(u));
    }
  }
  return traj;
}

inline Trajectory load_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_csv(is, path);
}

// Channelwise affine map: states first, then inputs. apply() sends the
// equilibrium to zero and gives training channels unit sample variance.
struct Normalizer {
  std::vector<double> shift;
  std::vector<double> scale;

  double apply(std::size_t channel, double v) const { return (v - shift[channel]) / scale[channel]; }
  double invert(std::size_t channel, double v) const { return v * scale[channel] + shift[channel]; }

  Trajectory apply(const Trajectory& traj) const { return map(traj, false); }
  Trajectory invert(const Trajectory& traj) const { return map(traj, true); }

  std::vector<double> apply_state(std::span<const double> x) const {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply(i, x[i]);
    return y;
  }
  std::vector<double> invert_state(std::span<const double> x) const {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = invert(i, x[i]);
    return y;
  }

 private:
  Trajectory map(const Trajectory& traj, bool inverse) const {
    const std::size_t n = traj.state_dim();
    require_dim(n + traj.input_dim(), shift.size(), "normalizer channels");
    Trajectory out = traj;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      for (std::size_t i = 0; i < n; ++i) out.states[k][i] = inverse ? invert(i, traj.states[k][i]) : apply(i, traj.states[k][i]);
      for (std::size_t i = 0; i < traj.input_dim(); ++i)
        out.inputs[k][i] = inverse ? invert(n + i, traj.inputs[k][i]) : apply(n + i, traj.inputs[k][i]);
    }
    return out;
  }
};

// Per-channel sample standard deviation over all given trajectories.
inline std::vector<double> channel_std(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw ConfigError("no trajectories given");
  const std::size_t n = trajs.front().state_dim();
  const std::size_t m = trajs.front().input_dim();
  std::vector<double> mean(n + m, 0.0), m2(n + m, 0.0);
  std::size_t count = 0;
  // Welford's update
  for (const auto& tr : trajs) {
    require_dim(tr.state_dim(), n, "trajectory states");
    require_dim(tr.input_dim(), m, "trajectory inputs");
    for (std::size_t k = 0; k < tr.size(); ++k) {
      ++count;
      for (std::size_t c = 0; c < n + m; ++c) {
        const double v = c < n ? tr.states[k][c] : tr.inputs[k][c - n];
        const double d = v - mean[c];
        mean[c] += d / static_cast<double>(count);
        m2[c] += d * (v - mean[c]);
      }
    }
  }
  std::vector<double> sd(n + m, 0.0);
  if (count < 2) return sd;
  for (std::size_t c = 0; c < n + m; ++c) sd[c] = std::sqrt(m2[c] / static_cast<double>(count - 1));
  return sd;
}

inline Normalizer fit_normalizer(const std::vector<Trajectory>& trajs, std::span<const double> equilibrium) {
  const auto sd = channel_std(trajs);
  require_dim(equilibrium.size(), sd.size(), "normalizer equilibrium");
  Normalizer nz;
  nz.shift.assign(equilibrium.begin(), equilibrium.end());
  nz.scale = sd;
  for (std::size_t c = 0; c < sd.size(); ++c) {
    if (!(sd[c] > 0.0)) throw ConfigError("channel " + std::to_string(c) + " has zero variance");
  }
  return nz;
}

// Adds zero-mean Gaussian noise with standard deviation percent/100 times the
// channel's standard deviation to every state and input channel.
inline Trajectory add_noise(const Trajectory& traj, double percent, std::uint64_t seed) {
  if (percent < 0.0) throw ConfigError("noise percentage must be >= 0");
  if (percent == 0.0) return traj;
  const auto sd = channel_std({traj});
  const std::size_t n = traj.state_dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Trajectory out = traj;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) out.states[k][i] += percent / 100.0 * sd[i] * normal(rng);
    for (std::size_t i = 0; i < traj.input_dim(); ++i) out.inputs[k][i] += percent / 100.0 * sd[n + i] * normal(rng);
  }
  return out;
}

}  // namespace sphnn
