// sphnn: generate data, train, predict, evaluate, verify, decompose, POD.
// Every subcommand reads a JSON run spec (--spec) with a few overrides.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "sphnn/io.hpp"

namespace fs = std::filesystem;
using namespace sphnn;

namespace {

struct Overrides {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::string out;
  std::optional<double> mu;
};

json load_spec(const Overrides& o) {
  if (o.spec.empty()) return json::object();
  json j = read_json_file(o.spec);
  if (!j.is_object()) throw ConfigError(o.spec + ": run spec must be a JSON object");
  return j;
}

std::string out_path(const Overrides& o, const json& spec, const std::string& fallback) {
  if (!o.out.empty()) return o.out;
  return spec.value("out", fallback);
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
T need(const json& j, const char* key, const char* cmd) {
  if (!j.contains(key)) throw ConfigError(std::string(cmd) + ": run spec needs '" + key + "'");
  return get<T>(j, key, T{});
}

std::size_t thread_cap(std::size_t wanted) {
  std::size_t n = wanted ? wanted : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPHS_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) throw ConfigError("SPHS_THREADS must be a positive integer");
    n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

Matrix matrix_from_json(const json& j, const char* what) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ConfigError(std::string(what) + ": ragged matrix");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::vector<double> time_grid(const json& j, double duration, double dt) {
  return uniform_grid(get(j, "duration", duration), get(j, "dt", dt));
}

// ---- generate ----

int cmd_generate(const Overrides& o) {
  const json spec = load_spec(o);
  detail::check_keys(spec,
                     {"system", "inertia", "mu", "trajectories", "duration", "dt", "seed", "out", "A", "B", "x0_box",
                      "x0_rest", "input"},
                     "generate");
  const std::string system = get<std::string>(spec, "system", "spinning_body");
  const std::string out = out_path(o, spec, "data");
  const std::uint64_t seed = o.seed.value_or(get<std::uint64_t>(spec, "seed", 0));
  fs::create_directories(out);

  std::vector<Trajectory> trajs;
  std::vector<DerivativePair> pairs;
  if (system == "spinning_body") {
    SpinningBodyConfig cfg;
    cfg.inertia = get(spec, "inertia", cfg.inertia);
    cfg.mu = o.mu.value_or(get(spec, "mu", cfg.mu));
    cfg.trajectories = get(spec, "trajectories", cfg.trajectories);
    cfg.duration = get(spec, "duration", cfg.duration);
    cfg.dt = get(spec, "dt", cfg.dt);
    cfg.seed = seed;
    auto data = gen_spinning_body(cfg);
    trajs = std::move(data.trajectories);
    pairs = std::move(data.pairs);
  } else if (system == "linear") {
    if (o.mu) throw ConfigError("generate: --mu applies to the spinning body only");
    const Matrix a = matrix_from_json(spec.value("A", json::array({{-0.1, -1.0}, {1.0, -0.1}})), "A");
    const Matrix b = spec.contains("B") ? matrix_from_json(spec.at("B"), "B") : Matrix(a.rows(), 0);
    const std::size_t n = a.rows();
    const auto f = linear_field(a, b);
    const auto times = time_grid(spec, 20.0, 0.1);
    const double box = get(spec, "x0_box", 1.0);
    const bool rest = get(spec, "x0_rest", false);
    const json input = spec.value("input", json::object());
    detail::check_keys(input, {"period", "amplitude", "period_step"}, "generate.input");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-box, box);
    const auto count = get<std::size_t>(spec, "trajectories", 4);
    for (std::size_t k = 0; k < count; ++k) {
      std::vector<double> x0(n, 0.0);
      for (auto& v : x0) v = rest ? 0.0 : dist(rng);
      InputSignal u;
      if (b.cols() > 0) {
        if (b.cols() != 1) throw ConfigError("generate: the square-wave input drives exactly one channel");
        const double period = get(input, "period", 5.0) + static_cast<double>(k) * get(input, "period_step", 1.0);
        u = square_wave(times, period, get(input, "amplitude", 0.5));
      }
      auto tr = simulate(f, x0, times, u);
      tr.state_names = default_names("x", n);
      if (b.cols() > 0) tr.input_names = default_names("u", b.cols());
      auto p = derivative_pairs(f, tr);
      pairs.insert(pairs.end(), p.begin(), p.end());
      trajs.push_back(std::move(tr));
    }
  } else {
    throw ConfigError("generate: unknown system '" + system + "' (expected spinning_body or linear)");
  }

  json manifest = {{"system", system}, {"seed", seed}, {"trajectories", json::array()}, {"pairs", "pairs.csv"}};
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "traj_%03zu.csv", k);
    save_csv(trajs[k], (fs::path(out) / name).string());
    manifest["trajectories"].push_back(name);
  }
  save_pairs(pairs, (fs::path(out) / "pairs.csv").string());
  write_json_file((fs::path(out) / "manifest.json").string(), manifest);
  std::cout << "wrote " << trajs.size() << " trajectories and " << pairs.size() << " derivative pairs to " << out
            << "\n";
  return 0;
}

// ---- train ----

json preset(const std::string& name) {
  if (name == "spinning_body") {
    return {{"model", {{"kind", "sphnn"}, {"n", 3}, {"j_mode", "state_dependent"}, {"r_mode", "constant"},
                       {"g_mode", "zero"}}},
            {"train", {{"regime", "derivative"}, {"steps", 50000}, {"learning_rate", 1e-3}}}};
  }
  if (name == "food_surrogate") {
    return {{"model", {{"kind", "sphnn"}, {"n", 5}, {"m", 1}, {"j_mode", "constant"}, {"r_mode", "constant"},
                       {"g_mode", "constant"}}},
            {"train", {{"regime", "trajectory"}, {"steps", 30000}, {"learning_rate", 1e-4}, {"augmented_dims", 3}}}};
  }
  throw ConfigError("unknown preset '" + name + "' (expected spinning_body or food_surrogate)");
}

// Trajectory paths from "trajectories" (list) or "manifest" (generate output).
std::vector<std::string> trajectory_paths(const json& data, std::string* pairs_path) {
  std::vector<std::string> paths = get(data, "trajectories", std::vector<std::string>{});
  if (data.contains("manifest")) {
    const auto mpath = data.at("manifest").get<std::string>();
    const json m = read_json_file(mpath);
    const auto dir = fs::path(mpath).parent_path();
    for (const auto& t : m.at("trajectories")) paths.push_back((dir / t.get<std::string>()).string());
    if (pairs_path && pairs_path->empty() && m.contains("pairs")) {
      *pairs_path = (dir / m.at("pairs").get<std::string>()).string();
    }
  }
  return paths;
}

std::vector<DerivativePair> normalize_pairs(std::vector<DerivativePair> pairs, const Normalizer& nz) {
  for (auto& p : pairs) {
    const std::size_t n = p.x.size();
    for (std::size_t i = 0; i < n; ++i) {
      p.x[i] = nz.apply(i, p.x[i]);
      p.dxdt[i] /= nz.scale[i];
    }
    for (std::size_t i = 0; i < p.u.size(); ++i) p.u[i] = nz.apply(n + i, p.u[i]);
  }
  return pairs;
}

int cmd_train(const Overrides& o) {
  json spec = load_spec(o);
  detail::check_keys(spec, {"preset", "model", "train", "data", "normalize", "noise_percent", "noise_seed", "verify", "out"},
                     "train");
  json model_j = json::object(), train_j = json::object();
  if (spec.contains("preset")) {
    const json p = preset(spec.at("preset").get<std::string>());
    model_j = p.at("model");
    train_j = p.at("train");
  }
  model_j.merge_patch(spec.value("model", json::object()));
  train_j.merge_patch(spec.value("train", json::object()));
  ModelSpec ms = model_spec_from_json(model_j);
  TrainConfig tc = train_config_from_json(train_j);
  if (o.seed) ms.seed = tc.seed = *o.seed;
  if (o.steps) tc.steps = *o.steps;
  tc.threads = thread_cap(train_j.contains("threads") ? tc.threads : 0);
  const std::string out = out_path(o, spec, "run");

  const json data = spec.value("data", json::object());
  detail::check_keys(data, {"trajectories", "manifest", "pairs"}, "train.data");
  std::string pairs_path = get<std::string>(data, "pairs", "");
  std::vector<Trajectory> trajs;
  for (const auto& p : trajectory_paths(data, &pairs_path)) trajs.push_back(load_csv(p));
  std::vector<DerivativePair> pairs;
  if (tc.regime == Regime::derivative) {
    if (pairs_path.empty()) throw ConfigError("train: derivative fitting needs data.pairs or a manifest with pairs");
    pairs = load_pairs(pairs_path);
  } else if (trajs.empty()) {
    throw ConfigError("train: trajectory fitting needs data.trajectories or data.manifest");
  }

  const double noise = get(spec, "noise_percent", 0.0);
  const auto noise_seed = get<std::uint64_t>(spec, "noise_seed", 0);
  for (std::size_t k = 0; k < trajs.size(); ++k) trajs[k] = add_noise(trajs[k], noise, noise_seed + k);

  std::optional<Normalizer> norm;
  if (spec.contains("normalize")) {
    const json nj = spec.at("normalize");
    detail::check_keys(nj, {"equilibrium"}, "train.normalize");
    if (trajs.empty()) throw ConfigError("train: normalization needs training trajectories");
    norm = fit_normalizer(trajs, need<std::vector<double>>(nj, "equilibrium", "train.normalize"));
    for (auto& tr : trajs) tr = norm->apply(tr);
    pairs = normalize_pairs(std::move(pairs), *norm);
  }

  const std::size_t data_m = tc.regime == Regime::derivative ? (pairs.empty() ? 0 : pairs.front().u.size())
                                                             : trajs.front().input_dim();
  if (data_m != ms.m) {
    throw ConfigError("train: data has " + std::to_string(data_m) + " input channels, model expects " +
                      std::to_string(ms.m));
  }

  PhsModel model(ms);
  const std::string hist_path = (fs::path(out) / "history.csv").string();
  fs::create_directories(out);
  const auto hist = train(model, trajs, pairs, tc);

  std::ostringstream hs;
  hs << "step,loss,seconds\n";
  for (std::size_t k = 0; k < hist.loss.size(); ++k) {
    hs << k << ',' << format_double(hist.loss[k]) << ',' << format_double(hist.seconds[k]) << '\n';
  }
  write_text(hist_path, hs.str());
  save_checkpoint(model, (fs::path(out) / "checkpoint.json").string(), norm);
  json run = {{"model", to_json(ms)}, {"train", to_json(tc)}, {"noise_percent", noise}, {"noise_seed", noise_seed}};
  write_json_file((fs::path(out) / "run.json").string(), run);

  std::cout << "trained " << hist.loss.size() << " steps";
  if (!hist.loss.empty()) std::cout << ", loss " << hist.loss.front() << " -> " << hist.loss.back();
  std::cout << "\n";
  if (is_phs(ms.kind)) {
    const json vj = spec.value("verify", json::object());
    detail::check_keys(vj, {"samples", "seed"}, "train.verify");
    const auto rep = verify_stability(model, get<std::size_t>(vj, "samples", 1000), get<std::uint64_t>(vj, "seed", 0));
    write_json_file((fs::path(out) / "report.json").string(), to_json(rep));
    std::cout << "verdict: " << to_string(rep.verdict) << "\n";
  }
  return 0;
}

// ---- predict ----

int cmd_predict(const Overrides& o) {
  const json spec = load_spec(o);
  detail::check_keys(spec,
                     {"checkpoint", "x0", "initial_from", "times", "input", "interpolation", "integration", "truth",
                      "out"},
                     "predict");
  auto cp = load_checkpoint(need<std::string>(spec, "checkpoint", "predict"));
  const PhsModel& model = cp.model;
  const std::size_t n = model.state_dim();
  const std::size_t m = model.input_dim();

  std::optional<Trajectory> initial;
  if (spec.contains("initial_from")) initial = load_csv(spec.at("initial_from").get<std::string>());
  std::vector<double> x0 = get(spec, "x0", std::vector<double>{});
  if (x0.empty()) {
    if (!initial) throw ConfigError("predict: give x0 or initial_from");
    x0 = initial->states.front();
  }
  if (x0.size() > n) throw ConfigError("predict: x0 has more entries than the model state");
  const std::size_t observed = x0.size();

  std::vector<double> times;
  if (spec.contains("times")) {
    const json tj = spec.at("times");
    detail::check_keys(tj, {"duration", "dt"}, "predict.times");
    times = time_grid(tj, 10.0, 0.1);
  } else if (initial) {
    times = initial->times;
  } else {
    throw ConfigError("predict: give times or initial_from");
  }

  const Interpolation interp = interpolation_from_string(get<std::string>(spec, "interpolation", "linear"));
  InputSignal u;
  if (m > 0) {
    Trajectory src;
    if (spec.contains("input")) {
      src = load_csv(spec.at("input").get<std::string>());
    } else if (initial && initial->has_inputs()) {
      src = *initial;
    } else {
      throw ConfigError("predict: model has " + std::to_string(m) + " input channel(s) but no input was given");
    }
    if (src.input_dim() != m) {
      throw ConfigError("predict: input file has " + std::to_string(src.input_dim()) + " channel(s), model expects " +
                        std::to_string(m));
    }
    if (cp.normalizer) {
      for (auto& row : src.inputs)
        for (std::size_t i = 0; i < m; ++i) row[i] = cp.normalizer->apply(observed + i, row[i]);
    }
    u = InputSignal(src.times, src.inputs, interp);
  }

  // normalized coordinates; augmented dims start at zero
  std::vector<double> z0(n, 0.0);
  for (std::size_t i = 0; i < observed; ++i) z0[i] = cp.normalizer ? cp.normalizer->apply(i, x0[i]) : x0[i];
  const IntegrationConfig ic = integration_from_json(spec.value("integration", json::object()));
  Trajectory pred = integrate(model_field(model), z0, times, u, ic);
  if (cp.normalizer) {
    for (auto& row : pred.states)
      for (std::size_t i = 0; i < observed; ++i) row[i] = cp.normalizer->invert(i, row[i]);
    for (auto& row : pred.inputs)
      for (std::size_t i = 0; i < m; ++i) row[i] = cp.normalizer->invert(observed + i, row[i]);
  }
  pred.state_names = default_names("x", observed);
  for (std::size_t i = observed; i < n; ++i) pred.state_names.push_back("a" + std::to_string(i - observed + 1));

  const std::string out = out_path(o, spec, "prediction.csv");
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_csv(pred, out);
  json summary = {{"rows", pred.size()}, {"out", out}};
  if (spec.contains("truth") || initial) {
    const Trajectory truth = spec.contains("truth") ? load_csv(spec.at("truth").get<std::string>()) : *initial;
    std::vector<std::size_t> dims(observed);
    std::iota(dims.begin(), dims.end(), 0);
    summary["rmse"] = rmse(pred, truth, dims);
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---- eval ----

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Mean of the values left after trimming a quarter from each end.
double interquartile_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t cut = v.size() / 4;
  double s = 0.0;
  for (std::size_t i = cut; i < v.size() - cut; ++i) s += v[i];
  return s / static_cast<double>(v.size() - 2 * cut);
}

int cmd_eval(const Overrides& o) {
  const json spec = load_spec(o);
  detail::check_keys(spec, {"truth", "predictions", "dims", "spinning_body", "out"}, "eval");
  const Trajectory truth = load_csv(need<std::string>(spec, "truth", "eval"));
  const auto files = need<std::vector<std::string>>(spec, "predictions", "eval");
  if (files.empty()) throw ConfigError("eval: predictions list is empty");
  std::vector<std::size_t> dims = get(spec, "dims", std::vector<std::size_t>{});
  if (dims.empty()) {
    dims.resize(truth.state_dim());
    std::iota(dims.begin(), dims.end(), 0);
  }
  std::optional<std::array<double, 3>> inertia;
  if (spec.contains("spinning_body")) {
    const json sb = spec.at("spinning_body");
    inertia = std::array<double, 3>{1.0, 2.0, 3.0};
    if (sb.is_object()) {
      detail::check_keys(sb, {"inertia"}, "eval.spinning_body");
      inertia = get(sb, "inertia", *inertia);
    } else if (!sb.is_boolean()) {
      throw ConfigError("eval: spinning_body must be true or an object with inertia");
    } else if (!sb.get<bool>()) {
      inertia.reset();
    }
    if (inertia && truth.state_dim() < 3) throw ConfigError("eval: spinning-body energy needs 3 state columns");
  }

  std::vector<Trajectory> preds;
  json metrics = {{"truth", spec.at("truth")}, {"dims", dims}, {"predictions", json::array()}};
  std::vector<double> totals;
  for (const auto& f : files) {
    preds.push_back(load_csv(f));
    const auto& p = preds.back();
    std::vector<double> per_dim;
    for (auto d : dims) per_dim.push_back(rmse(p, truth, {d}));
    totals.push_back(rmse(p, truth, dims));
    metrics["predictions"].push_back({{"file", f}, {"rmse_total", totals.back()}, {"rmse_per_dim", per_dim}});
  }
  if (preds.size() > 1) {
    metrics["rmse_summary"] = {{"interquartile_mean", interquartile_mean(totals)},
                               {"q25", quantile(totals, 0.25)},
                               {"q75", quantile(totals, 0.75)}};
  }

  const std::string out = out_path(o, spec, "eval");
  fs::create_directories(out);
  write_json_file((fs::path(out) / "metrics.json").string(), metrics);

  const bool band = preds.size() > 1;
  std::ostringstream os;
  if (inertia) {
    os << "t,energy_truth";
    for (std::size_t k = 0; k < preds.size(); ++k) os << ",energy_" << k + 1;
    if (band) os << ",iqm,q25,q75";
    os << '\n';
    for (std::size_t s = 0; s < truth.size(); ++s) {
      os << format_double(truth.times[s]) << ',' << format_double(rigid_energy(truth.states[s], *inertia));
      std::vector<double> e;
      for (const auto& p : preds) {
        e.push_back(rigid_energy(p.states[s], *inertia));
        os << ',' << format_double(e.back());
      }
      if (band) {
        os << ',' << format_double(interquartile_mean(e)) << ',' << format_double(quantile(e, 0.25)) << ','
           << format_double(quantile(e, 0.75));
      }
      os << '\n';
    }
    write_text((fs::path(out) / "energy.csv").string(), os.str());
  } else if (band) {
    os << 't';
    for (auto d : dims) os << ",x" << d + 1 << "_iqm,x" << d + 1 << "_q25,x" << d + 1 << "_q75";
    os << '\n';
    for (std::size_t s = 0; s < truth.size(); ++s) {
      os << format_double(truth.times[s]);
      for (auto d : dims) {
        std::vector<double> v;
        for (const auto& p : preds) v.push_back(p.states[s][d]);
        os << ',' << format_double(interquartile_mean(v)) << ',' << format_double(quantile(v, 0.25)) << ','
           << format_double(quantile(v, 0.75));
      }
      os << '\n';
    }
    write_text((fs::path(out) / "band.csv").string(), os.str());
  }
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

// ---- verify ----

int cmd_verify(const Overrides& o) {
  const json spec = load_spec(o);
  detail::check_keys(spec, {"checkpoint", "samples", "seed", "box", "probe", "out"}, "verify");
  const auto cp = load_checkpoint(need<std::string>(spec, "checkpoint", "verify"));
  VerifyConfig vc;
  vc.samples = get(spec, "samples", vc.samples);
  vc.seed = o.seed.value_or(get(spec, "seed", vc.seed));
  vc.box = get(spec, "box", vc.box);
  json result = to_json(verify_stability(cp.model, vc));
  if (spec.contains("probe")) {
    const json pj = spec.at("probe");
    detail::check_keys(pj, {"radius", "horizon", "dt", "directions", "seed"}, "verify.probe");
    ProbeConfig pc;
    pc.radius = get(pj, "radius", pc.radius);
    pc.horizon = get(pj, "horizon", pc.horizon);
    pc.dt = get(pj, "dt", pc.dt);
    pc.directions = get(pj, "directions", pc.directions);
    pc.seed = get(pj, "seed", pc.seed);
    result["probe"] = to_json(boundedness_probe(cp.model, pc));
  }
  const std::string out = out_path(o, spec, "");
  if (!out.empty()) write_json_file(out, result);
  std::cout << result.dump(2) << "\n";
  return 0;
}

// ---- decompose ----

int cmd_decompose(const Overrides& o) {
  const json spec = load_spec(o);
  detail::check_keys(spec, {"checkpoint", "dims", "lower", "upper", "points", "base", "u", "out"}, "decompose");
  const auto cp = load_checkpoint(need<std::string>(spec, "checkpoint", "decompose"));
  const PhsModel& model = cp.model;
  if (!is_phs(model.kind())) throw UnsupportedError("decompose: the NODE model has no port-Hamiltonian structure");
  const std::size_t n = model.state_dim();
  const auto dims = get(spec, "dims", std::vector<std::size_t>{0, std::min<std::size_t>(1, n - 1)});
  if (dims.empty() || dims.size() > 2) throw ConfigError("decompose: dims must list one or two state indices");
  for (auto d : dims) {
    if (d >= n) throw ConfigError("decompose: dim " + std::to_string(d) + " out of range");
  }
  const auto lower = get(spec, "lower", std::vector<double>(dims.size(), -1.0));
  const auto upper = get(spec, "upper", std::vector<double>(dims.size(), 1.0));
  const auto points = get(spec, "points", std::vector<std::size_t>(dims.size(), 21));
  require_dim(lower.size(), dims.size(), "decompose lower");
  require_dim(upper.size(), dims.size(), "decompose upper");
  require_dim(points.size(), dims.size(), "decompose points");
  for (auto p : points) {
    if (p < 2) throw ConfigError("decompose: at least two points per axis");
  }
  std::vector<double> base = get(spec, "base", model.xstar());
  require_dim(base.size(), n, "decompose base state");
  const auto u = get(spec, "u", std::vector<double>(model.input_dim(), 0.0));
  require_dim(u.size(), model.input_dim(), "decompose input");

  std::ostringstream os;
  for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << 'x' << i + 1;
  os << ",H";
  for (const char* p : {"f", "c", "d", "g"})
    for (std::size_t i = 0; i < n; ++i) os << ',' << p << i + 1;
  os << ",c_dot_grad\n";

  Evaluator ev(model);
  const std::size_t ny = dims.size() > 1 ? points[1] : 1;
  for (std::size_t a = 0; a < points[0]; ++a) {
    for (std::size_t b = 0; b < ny; ++b) {
      auto x = base;
      x[dims[0]] = lower[0] + (upper[0] - lower[0]) * static_cast<double>(a) / static_cast<double>(points[0] - 1);
      if (dims.size() > 1) {
        x[dims[1]] = lower[1] + (upper[1] - lower[1]) * static_cast<double>(b) / static_cast<double>(points[1] - 1);
      }
      ev.evaluate(x, u);
      const auto c = ev.conservative();
      for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << format_double(x[i]);
      os << ',' << format_double(ev.hamiltonian());
      for (const auto& v : {ev.rhs(), c, ev.dissipative(), ev.input_term()})
        for (double e : v) os << ',' << format_double(e);
      os << ',' << format_double(dot(c, ev.gradient())) << '\n';
    }
  }
  const std::string out = out_path(o, spec, "field.csv");
  write_text(out, os.str());
  std::cout << "wrote " << points[0] * ny << " grid points to " << out << "\n";
  return 0;
}

// ---- pod ----

Matrix snapshot_matrix(const Trajectory& tr) {
  Matrix a(tr.size(), tr.state_dim());
  for (std::size_t k = 0; k < tr.size(); ++k)
    for (std::size_t i = 0; i < tr.state_dim(); ++i) a(k, i) = tr.states[k][i];
  return a;
}

int cmd_pod(const Overrides& o) {
  const json spec = load_spec(o);
  detail::check_keys(spec, {"action", "snapshots", "n", "equilibrium", "basis", "input", "out"}, "pod");
  const std::string action = get<std::string>(spec, "action", "fit");
  if (action == "fit") {
    const Trajectory snaps = load_csv(need<std::string>(spec, "snapshots", "pod fit"));
    const Matrix a = snapshot_matrix(snaps);
    PodBasis basis = pod_fit(a, get<std::size_t>(spec, "n", 40));
    if (spec.contains("equilibrium")) {
      basis = set_equilibrium(std::move(basis), spec.at("equilibrium").get<std::vector<double>>());
    }
    double err = 0.0, total = 0.0, tail = 0.0;
    for (std::size_t k = 0; k < snaps.size(); ++k) {
      const double e = reconstruction_error(basis, snaps.states[k]);
      err += e * e;
      total += dot(snaps.states[k], snaps.states[k]);
    }
    for (std::size_t i = basis.latent_dim(); i < basis.singular_values.size(); ++i) {
      tail += basis.singular_values[i] * basis.singular_values[i];
    }
    const std::string out = out_path(o, spec, "basis.json");
    save_basis(basis, out);
    json summary = {{"basis", out},
                    {"N", basis.field_dim()},
                    {"n", basis.latent_dim()},
                    {"c", basis.scale},
                    {"reconstruction_error", std::sqrt(err)},
                    {"relative_error", total > 0.0 ? std::sqrt(err / total) : 0.0},
                    {"truncation_bound", std::sqrt(tail)}};
    std::cout << summary.dump(2) << "\n";
    return 0;
  }
  const PodBasis basis = load_basis(need<std::string>(spec, "basis", "pod"));
  const Trajectory in = load_csv(need<std::string>(spec, "input", "pod"));
  Trajectory res = in;
  if (action == "encode") {
    for (auto& row : res.states) row = encode(basis, row);
    res.state_names = default_names("z", basis.latent_dim());
  } else if (action == "decode") {
    for (auto& row : res.states) row = decode(basis, row);
    res.state_names = default_names("x", basis.field_dim());
  } else {
    throw ConfigError("pod: unknown action '" + action + "' (expected fit, encode or decode)");
  }
  const std::string out = out_path(o, spec, action == "encode" ? "latent.csv" : "field.csv");
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  save_csv(res, out);
  std::cout << "wrote " << res.size() << " rows to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable port-Hamiltonian neural networks: data, training and verification"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--spec", o.spec, "JSON run spec")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the seed");
    sub->add_option("--out", o.out, "override the output path");
  };
  auto* gen = app.add_subcommand("generate", "write synthetic trajectories and derivative pairs");
  add_common(gen);
  gen->add_option("--mu", o.mu, "spinning-body damping");
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(tr);
  tr->add_option("--steps", o.steps, "override the number of optimizer steps");
  auto* pr = app.add_subcommand("predict", "integrate a trained model");
  add_common(pr);
  auto* ev = app.add_subcommand("eval", "RMSE and energy curves of predictions");
  add_common(ev);
  auto* ve = app.add_subcommand("verify", "stability report for a checkpoint");
  add_common(ve);
  auto* de = app.add_subcommand("decompose", "conservative/dissipative/input split on a grid");
  add_common(de);
  auto* po = app.add_subcommand("pod", "fit a POD basis or encode/decode fields");
  add_common(po);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // usage errors count as configuration errors; --help exits 0
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (gen->parsed()) return cmd_generate(o);
    if (tr->parsed()) return cmd_train(o);
    if (pr->parsed()) return cmd_predict(o);
    if (ev->parsed()) return cmd_eval(o);
    if (ve->parsed()) return cmd_verify(o);
    if (de->parsed()) return cmd_decompose(o);
    if (po->parsed()) return cmd_pod(o);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
