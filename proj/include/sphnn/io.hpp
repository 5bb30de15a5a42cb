#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sphnn/data.hpp"
#include "sphnn/errors.hpp"
#include "sphnn/phs.hpp"
#include "sphnn/pod.hpp"
#include "sphnn/train.hpp"
#include "sphnn/verify.hpp"

namespace sphnn {

using json = nlohmann::json;

inline constexpr int checkpoint_version = 1;

namespace detail {

template <class E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [e, name] : table) {
    if (s == name) return e;
  }
  std::string known;
  for (const auto& [e, name] : table) known += std::string(known.empty() ? "" : ", ") + name;
  throw ConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + known + ")");
}

template <class E, std::size_t N>
const char* enum_name(E v, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [e, name] : table) {
    if (e == v) return name;
  }
  return "?";
}

inline const std::pair<ModelKind, const char*> kinds[] = {{ModelKind::sphnn, "sphnn"},
                                                          {ModelKind::sphnn_lm, "sphnn_lm"},
                                                          {ModelKind::bphnn, "bphnn"},
                                                          {ModelKind::phnn, "phnn"},
                                                          {ModelKind::node, "node"}};
inline const std::pair<MatrixMode, const char*> modes[] = {{MatrixMode::zero, "zero"},
                                                           {MatrixMode::constant, "constant"},
                                                           {MatrixMode::state_dependent, "state_dependent"},
                                                           {MatrixMode::fixed_symplectic, "fixed_symplectic"}};
inline const std::pair<Definiteness, const char*> definiteness[] = {{Definiteness::strict, "strict"},
                                                                    {Definiteness::semi, "semi"}};
inline const std::pair<Regime, const char*> regimes[] = {{Regime::derivative, "derivative"},
                                                         {Regime::trajectory, "trajectory"}};
inline const std::pair<Interpolation, const char*> interpolations[] = {
    {Interpolation::linear, "linear"}, {Interpolation::zero_order_hold, "zero_order_hold"}};
inline const std::pair<Method, const char*> methods[] = {{Method::rk4_fixed, "rk4"},
                                                         {Method::tsit5_adaptive, "tsit5"}};

// Rejects keys outside `allowed` so typos do not pass silently.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError(std::string(what) + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline const char* to_string(ModelKind k) { return detail::enum_name(k, detail::kinds); }
inline const char* to_string(MatrixMode m) { return detail::enum_name(m, detail::modes); }
inline const char* to_string(Definiteness d) { return detail::enum_name(d, detail::definiteness); }
inline const char* to_string(Regime r) { return detail::enum_name(r, detail::regimes); }
inline const char* to_string(Method m) { return detail::enum_name(m, detail::methods); }
inline const char* to_string(Interpolation i) { return detail::enum_name(i, detail::interpolations); }

inline Interpolation interpolation_from_string(const std::string& s) {
  return detail::parse_enum(s, detail::interpolations, "interpolation");
}

inline json to_json(const ModelSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"n", s.n},
          {"m", s.m},
          {"hidden", s.hidden},
          {"j_mode", to_string(s.j_mode)},
          {"r_mode", to_string(s.r_mode)},
          {"g_mode", to_string(s.g_mode)},
          {"r_definiteness", to_string(s.r_definiteness)},
          {"epsilon", s.epsilon},
          {"beta", s.beta},
          {"xstar", s.xstar},
          {"xstar_box", s.xstar_box},
          {"energy_outputs", s.energy_outputs},
          {"seed", s.seed}};
}

inline ModelSpec model_spec_from_json(const json& j) {
  detail::check_keys(j,
                     {"kind", "n", "m", "hidden", "j_mode", "r_mode", "g_mode", "r_definiteness", "epsilon", "beta",
                      "xstar", "xstar_box", "energy_outputs", "seed"},
                     "model");
  ModelSpec s;
  if (j.contains("kind")) s.kind = detail::parse_enum(j.at("kind").get<std::string>(), detail::kinds, "model kind");
  detail::read(j, "n", s.n);
  detail::read(j, "m", s.m);
  detail::read(j, "hidden", s.hidden);
  if (j.contains("j_mode")) s.j_mode = detail::parse_enum(j.at("j_mode").get<std::string>(), detail::modes, "matrix mode");
  if (j.contains("r_mode")) s.r_mode = detail::parse_enum(j.at("r_mode").get<std::string>(), detail::modes, "matrix mode");
  if (j.contains("g_mode")) s.g_mode = detail::parse_enum(j.at("g_mode").get<std::string>(), detail::modes, "matrix mode");
  if (j.contains("r_definiteness")) {
    s.r_definiteness =
        detail::parse_enum(j.at("r_definiteness").get<std::string>(), detail::definiteness, "definiteness");
  }
  detail::read(j, "epsilon", s.epsilon);
  detail::read(j, "beta", s.beta);
  detail::read(j, "xstar", s.xstar);
  detail::read(j, "xstar_box", s.xstar_box);
  detail::read(j, "energy_outputs", s.energy_outputs);
  detail::read(j, "seed", s.seed);
  return s;
}

inline json to_json(const TrainConfig& c) {
  return {{"regime", to_string(c.regime)},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"rollout_length", c.rollout_length},
          {"substeps", c.substeps},
          {"interpolation", to_string(c.interpolation)},
          {"augmented_dims", c.augmented_dims},
          {"observed", c.observed},
          {"seed", c.seed},
          {"threads", c.threads}};
}

inline TrainConfig train_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"regime", "steps", "learning_rate", "batch_size", "rollout_length", "substeps",
                      "interpolation", "augmented_dims", "observed", "seed", "threads"},
                     "train");
  TrainConfig c;
  if (j.contains("regime")) c.regime = detail::parse_enum(j.at("regime").get<std::string>(), detail::regimes, "regime");
  detail::read(j, "steps", c.steps);
  detail::read(j, "learning_rate", c.learning_rate);
  detail::read(j, "batch_size", c.batch_size);
  detail::read(j, "rollout_length", c.rollout_length);
  detail::read(j, "substeps", c.substeps);
  if (j.contains("interpolation")) c.interpolation = interpolation_from_string(j.at("interpolation").get<std::string>());
  detail::read(j, "augmented_dims", c.augmented_dims);
  detail::read(j, "observed", c.observed);
  detail::read(j, "seed", c.seed);
  detail::read(j, "threads", c.threads);
  if (!(c.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  return c;
}

inline IntegrationConfig integration_from_json(const json& j) {
  detail::check_keys(j, {"method", "step", "rtol", "atol", "max_steps"}, "integration");
  IntegrationConfig c;
  if (j.contains("method")) c.method = detail::parse_enum(j.at("method").get<std::string>(), detail::methods, "method");
  detail::read(j, "step", c.step);
  detail::read(j, "rtol", c.rtol);
  detail::read(j, "atol", c.atol);
  detail::read(j, "max_steps", c.max_steps);
  return c;
}

inline json to_json(const Normalizer& n) { return {{"shift", n.shift}, {"scale", n.scale}}; }

inline Normalizer normalizer_from_json(const json& j) {
  detail::check_keys(j, {"shift", "scale"}, "normalizer");
  Normalizer n;
  detail::read(j, "shift", n.shift);
  detail::read(j, "scale", n.scale);
  require_dim(n.scale.size(), n.shift.size(), "normalizer scale");
  for (double s : n.scale) {
    if (!(s > 0.0)) throw ConfigError("normalizer: scale must be > 0");
  }
  return n;
}

inline json to_json(const StabilityReport& r) {
  return {{"hessian_pd_at_xstar", r.hessian_pd_at_xstar},
          {"hessian_min_eigenvalue", r.hessian_min_eigenvalue},
          {"hamiltonian_at_xstar", r.hamiltonian_at_xstar},
          {"gradient_norm_at_xstar", r.gradient_at_xstar},
          {"normalized", r.normalized},
          {"skewness_residual", r.skewness_residual},
          {"r_min_eigenvalue", r.r_min_eigenvalue},
          {"r_mode", to_string(r.r_mode)},
          {"r_strict", r.r_strict},
          {"r_psd", r.r_psd},
          {"convexity_violations", r.convexity_violations},
          {"samples", r.samples},
          {"verdict", to_string(r.verdict)},
          {"notes", r.notes}};
}

inline json to_json(const ProbeResult& p) {
  return {{"passed", p.passed},
          {"runs", p.runs},
          {"bound_violations", p.bound_violations},
          {"increase_violations", p.increase_violations},
          {"max_increase", p.max_increase},
          {"max_distance", p.max_distance},
          {"final_distance", p.final_distance},
          {"failures", p.failures}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  os << text;
  if (!os) throw DataError("write failed for '" + path + "'");
}

inline void write_json_file(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---- derivative pairs: header x1..xn,dx1..dxn[,u1..um] ----

inline void save_pairs(const std::vector<DerivativePair>& pairs, const std::string& path) {
  if (pairs.empty()) throw DataError("no derivative pairs to write to '" + path + "'");
  const std::size_t n = pairs.front().x.size();
  const std::size_t m = pairs.front().u.size();
  std::ostringstream os;
  for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << "x" << i + 1;
  for (std::size_t i = 0; i < n; ++i) os << ",dx" << i + 1;
  for (std::size_t i = 0; i < m; ++i) os << ",u" << i + 1;
  os << '\n';
  for (const auto& p : pairs) {
    for (std::size_t i = 0; i < n; ++i) os << (i ? "," : "") << format_double(p.x[i]);
    for (double v : p.dxdt) os << ',' << format_double(v);
    for (double v : p.u) os << ',' << format_double(v);
    os << '\n';
  }
  write_text(path, os.str());
}

inline std::vector<DerivativePair> load_pairs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ":1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  std::size_t n = 0, dn = 0, m = 0;
  for (const auto& h : header) {
    if (h.rfind("dx", 0) == 0) {
      ++dn;
    } else if (!h.empty() && h[0] == 'u') {
      ++m;
    } else {
      if (dn > 0 || m > 0) throw DataError(path + ":1: state column '" + h + "' out of order");
      ++n;
    }
  }
  if (n == 0 || dn != n) throw DataError(path + ":1: expected matching x and dx columns");
  std::vector<DerivativePair> pairs;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " columns, found " + std::to_string(cells.size()));
    }
    DerivativePair p;
    for (std::size_t i = 0; i < n; ++i) p.x.push_back(detail::parse_cell(cells[i], line_no, path));
    for (std::size_t i = 0; i < n; ++i) p.dxdt.push_back(detail::parse_cell(cells[n + i], line_no, path));
    for (std::size_t i = 0; i < m; ++i) p.u.push_back(detail::parse_cell(cells[2 * n + i], line_no, path));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ---- checkpoints ----

struct Checkpoint {
  PhsModel model;
  std::optional<Normalizer> normalizer;
};

inline json checkpoint_json(const PhsModel& model, const std::optional<Normalizer>& norm = std::nullopt) {
  json segs = json::array();
  for (const auto& s : model.params().segments()) {
    segs.push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}});
  }
  json j = {{"format", "sphnn-checkpoint"},
            {"version", checkpoint_version},
            {"model", to_json(model.spec())},
            {"segments", segs},
            {"params", model.params().values()},
            {"xstar", model.xstar()}};
  if (norm) j["normalizer"] = to_json(*norm);
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "sphnn-checkpoint") throw ConfigError("not a checkpoint file");
  if (j.value("version", 0) != checkpoint_version) {
    throw ConfigError("unsupported checkpoint version " + j.value("version", json(0)).dump());
  }
  Checkpoint cp{PhsModel(model_spec_from_json(j.at("model"))), std::nullopt};
  const auto params = j.at("params").get<std::vector<double>>();
  if (params.size() != cp.model.params().size()) {
    throw ConfigError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                      std::to_string(cp.model.params().size()));
  }
  cp.model.params().assign(params);
  if (j.contains("normalizer")) cp.normalizer = normalizer_from_json(j.at("normalizer"));
  return cp;
}

inline void save_checkpoint(const PhsModel& model, const std::string& path,
                            const std::optional<Normalizer>& norm = std::nullopt) {
  write_json_file(path, checkpoint_json(model, norm));
}

inline Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json_file(path)); }

// ---- POD basis: JSON header + CSV mode matrix next to it ----

inline void save_basis(const PodBasis& b, const std::string& path) {
  const std::filesystem::path p(path);
  const auto csv = p.stem().string() + ".modes.csv";
  json j = {{"format", "sphnn-pod-basis"},
            {"version", 1},
            {"N", b.field_dim()},
            {"n", b.latent_dim()},
            {"c", b.scale},
            {"shift", b.shift},
            {"singular_values", b.singular_values},
            {"modes", csv}};
  write_json_file(path, j);
  std::ostringstream os;
  for (std::size_t i = 0; i < b.field_dim(); ++i) {
    for (std::size_t k = 0; k < b.latent_dim(); ++k) os << (k ? "," : "") << format_double(b.modes(i, k));
    os << '\n';
  }
  write_text((p.parent_path() / csv).string(), os.str());
}

inline PodBasis load_basis(const std::string& path) {
  const json j = read_json_file(path);
  if (j.value("format", "") != "sphnn-pod-basis") throw ConfigError("'" + path + "' is not a POD basis file");
  PodBasis b;
  const auto rows = j.at("N").get<std::size_t>();
  const auto cols = j.at("n").get<std::size_t>();
  b.scale = j.at("c").get<double>();
  b.shift = j.at("shift").get<std::vector<double>>();
  b.singular_values = j.value("singular_values", std::vector<double>{});
  require_dim(b.shift.size(), cols, "basis shift");
  const auto csv = (std::filesystem::path(path).parent_path() / j.at("modes").get<std::string>()).string();
  std::ifstream is(csv);
  if (!is) throw DataError("cannot open '" + csv + "'");
  b.modes = Matrix(rows, cols);
  std::string line;
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(is, line)) throw DataError(csv + ": expected " + std::to_string(rows) + " rows");
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != cols) throw DataError(csv + ":" + std::to_string(i + 1) + ": expected " + std::to_string(cols) + " values");
    for (std::size_t k = 0; k < cols; ++k) b.modes(i, k) = detail::parse_cell(cells[k], i + 1, csv);
  }
  return b;
}

}  // namespace sphnn
