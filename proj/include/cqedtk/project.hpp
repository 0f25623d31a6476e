#pragma once

// Project configuration: one JSON document drives every pipeline stage.
// Relative paths resolve against the config file's directory. Lengths carry
// an explicit unit in the key name.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "error.hpp"
#include "meshplan.hpp"
#include "orchestrate.hpp"
#include "report.hpp"
#include "solvercfg.hpp"

namespace cqedtk::project {

namespace fs = std::filesystem;
using json = nlohmann::json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct FitWindow {
  std::string name;
  double lo = 0.0, hi = 0.0;  // Hz
};

struct SubsystemSpec {
  std::string name;
  std::vector<std::string> terminals;
  std::optional<std::string> junction;   // layout junction supplying E_J
  std::optional<double> e_j_ghz;         // explicit E_J / h
  std::optional<double> frequency_ghz;   // resonators
  std::optional<int> mode;               // resonator frequency from eigenmode index
};

struct ProjectConfig {
  fs::path config_path;
  fs::path base_dir;
  json raw;

  fs::path gds;
  std::string top;
  fs::path annotations;
  double chord_tolerance = 1e-6;  // m
  fs::path output_dir;

  solver::Materials materials;
  mesh::MeshControls mesh;

  std::string solver = "palace";
  std::string mesher = "gmsh";
  std::string launcher;
  double timeout_s = 86400.0;
  unsigned parallelism = 1;

  std::vector<solver::ProblemType> passes;

  int eig_modes = 4;
  std::optional<double> eig_shift_ghz;
  std::pair<double, double> eig_band_ghz{0.0, 1e6};
  double eig_q_min = 0.0;

  double drv_f_min_ghz = 0.0, drv_f_max_ghz = 0.0, drv_f_step_ghz = 0.0, drv_tol = 1e-9;

  std::vector<orch::GridPoint> sweep_grid;
  std::optional<orch::GridPoint> sweep_candidate;
  int sweep_mode = 1;
  double sweep_threshold = 0.003;

  results::PortPair through{2, 1};
  std::vector<std::string> fit_names;
  std::vector<FitWindow> fit_windows;
  std::size_t max_resonances = 16;

  std::string ham_method;  // "epr", "lom" or empty
  std::vector<SubsystemSpec> subsystems;

  std::vector<report::Target> targets;
  double freq_tol = 0.003;
  double kappa_tol = 0.16;

  bool has_pass(solver::ProblemType p) const { return std::find(passes.begin(), passes.end(), p) != passes.end(); }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : (base / q).lexically_normal();
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
std::optional<T> opt(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
  return j.at(key);
}

}  // namespace detail

/// `key.path=value`; the value is JSON when it parses, otherwise a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty key in override " + assignment);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline ProjectConfig from_json(json doc, const fs::path& config_path) {
  using detail::get;
  using detail::opt;
  ProjectConfig c;
  c.config_path = config_path;
  c.base_dir = config_path.has_parent_path() ? fs::absolute(config_path).parent_path() : fs::current_path();
  if (!doc.is_object()) throw ConfigError("project config must be a JSON object");
  c.raw = doc;

  if (const auto g = opt<std::string>(doc, "gds")) c.gds = detail::resolve(c.base_dir, *g);
  if (const auto a = opt<std::string>(doc, "annotations")) c.annotations = detail::resolve(c.base_dir, *a);
  c.top = get<std::string>(doc, "top", "");
  c.chord_tolerance = get<double>(doc, "chord_tolerance_um", 1.0) * 1e-6;
  c.output_dir = detail::resolve(c.base_dir, get<std::string>(doc, "output", "out"));

  const auto& mats = detail::section(doc, "materials");
  if (mats.contains("substrate")) {
    const auto& s = mats.at("substrate");
    c.materials.substrate = {get<std::string>(s, "name", "substrate"), get<double>(s, "permittivity", 11.49),
                             get<double>(s, "loss_tangent", 2.3e-6)};
  }
  if (mats.contains("air")) {
    const auto& s = mats.at("air");
    c.materials.air = {get<std::string>(s, "name", "vacuum"), get<double>(s, "permittivity", 1.0),
                       get<double>(s, "loss_tangent", 0.0)};
  }
  try {
    c.materials.substrate.validate();
    c.materials.air.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  const auto& m = detail::section(doc, "mesh");
  c.mesh.r = get<double>(m, "r", c.mesh.r);
  c.mesh.order = get<int>(m, "order", c.mesh.order);
  if (const auto w = opt<double>(m, "trace_width_um")) c.mesh.trace_width = *w * 1e-6;
  if (const auto s = opt<double>(m, "s_max_um")) c.mesh.s_max = *s * 1e-6;
  c.mesh.growth_rate = get<double>(m, "growth_rate", c.mesh.growth_rate);
  c.mesh.substrate_thickness = get<double>(m, "substrate_thickness_um", c.mesh.substrate_thickness * 1e6) * 1e-6;
  if (const auto pad = opt<std::vector<double>>(m, "air_padding_um")) {
    if (pad->size() != 3) throw ConfigError("mesh.air_padding_um must have 3 entries");
    c.mesh.air_padding = {(*pad)[0] * 1e-6, (*pad)[1] * 1e-6, (*pad)[2] * 1e-6};
  }
  if (!(c.mesh.r > 0.0)) throw ConfigError("mesh.r must be positive");

  const auto& t = detail::section(doc, "tools");
  c.solver = get<std::string>(t, "solver", c.solver);
  c.mesher = get<std::string>(t, "mesher", c.mesher);
  c.launcher = get<std::string>(t, "launcher", "");
  c.timeout_s = get<double>(t, "timeout_s", c.timeout_s);
  const int par = get<int>(t, "parallelism", 1);
  if (par < 1) throw ConfigError("tools.parallelism must be at least 1");
  c.parallelism = static_cast<unsigned>(par);
  if (!(c.timeout_s > 0.0)) throw ConfigError("tools.timeout_s must be positive");
  // bare relative paths with a slash are project-relative
  for (auto* p : {&c.solver, &c.mesher})
    if (p->find('/') != std::string::npos && !fs::path(*p).is_absolute()) *p = detail::resolve(c.base_dir, *p).string();

  for (const auto& p : get<std::vector<std::string>>(doc, "passes", {})) {
    try {
      c.passes.push_back(solver::parse_problem(p));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (c.passes.empty()) throw ConfigError("'passes' must list at least one of electrostatic, eigenmode, driven");

  const auto& e = detail::section(doc, "eigenmode");
  c.eig_modes = get<int>(e, "modes", c.eig_modes);
  c.eig_shift_ghz = opt<double>(e, "shift_ghz");
  if (const auto b = opt<std::vector<double>>(e, "band_ghz")) {
    if (b->size() != 2) throw ConfigError("eigenmode.band_ghz must have 2 entries");
    c.eig_band_ghz = {(*b)[0], (*b)[1]};
  }
  c.eig_q_min = get<double>(e, "q_min", 0.0);

  const auto& d = detail::section(doc, "driven");
  c.drv_f_min_ghz = get<double>(d, "f_min_ghz", 0.0);
  c.drv_f_max_ghz = get<double>(d, "f_max_ghz", 0.0);
  c.drv_f_step_ghz = get<double>(d, "f_step_ghz", 0.0);
  c.drv_tol = get<double>(d, "adaptive_tol", 1e-9);
  if (c.has_pass(solver::ProblemType::driven) && !(c.drv_f_max_ghz > c.drv_f_min_ghz && c.drv_f_min_ghz > 0))
    throw ConfigError("driven pass needs 0 < driven.f_min_ghz < driven.f_max_ghz");

  const auto& s = detail::section(doc, "sweep");
  for (const auto& p : get<std::vector<std::pair<double, int>>>(s, "grid", {})) c.sweep_grid.push_back({p.first, p.second});
  if (const auto cand = opt<std::pair<double, int>>(s, "candidate")) c.sweep_candidate = orch::GridPoint{cand->first, cand->second};
  c.sweep_mode = get<int>(s, "mode", 1);
  c.sweep_threshold = get<double>(s, "threshold", 0.003);
  for (const auto& p : c.sweep_grid)
    if (!(p.r > 0.0)) throw ConfigError("sweep grid r values must be positive");

  const auto& f = detail::section(doc, "fit");
  if (const auto th = opt<std::pair<int, int>>(f, "through")) c.through = *th;
  c.fit_names = get<std::vector<std::string>>(f, "names", {});
  c.max_resonances = get<std::size_t>(f, "max_resonances", 16);
  if (f.contains("windows_ghz")) {
    const auto w = get<std::vector<std::pair<double, double>>>(f, "windows_ghz", {});
    for (std::size_t i = 0; i < w.size(); ++i) {
      const std::string name = i < c.fit_names.size() ? c.fit_names[i] : fmt::format("R{}", i + 1);
      if (!(w[i].second > w[i].first)) throw ConfigError("fit window " + name + " is empty");
      c.fit_windows.push_back({name, w[i].first * 1e9, w[i].second * 1e9});
    }
  }

  const auto& h = detail::section(doc, "hamiltonian");
  c.ham_method = get<std::string>(h, "method", "");
  if (!c.ham_method.empty() && c.ham_method != "epr" && c.ham_method != "lom")
    throw ConfigError("hamiltonian.method must be 'epr' or 'lom'");
  if (h.contains("subsystems"))
    for (const auto& sub : h.at("subsystems")) {
      SubsystemSpec ss;
      ss.name = get<std::string>(sub, "name", "");
      ss.terminals = get<std::vector<std::string>>(sub, "terminals", {});
      ss.junction = opt<std::string>(sub, "junction");
      ss.e_j_ghz = opt<double>(sub, "E_J_ghz");
      ss.frequency_ghz = opt<double>(sub, "frequency_ghz");
      ss.mode = opt<int>(sub, "mode");
      if (ss.name.empty()) throw ConfigError("hamiltonian subsystem without a name");
      c.subsystems.push_back(ss);
    }

  const auto& rep = detail::section(doc, "report");
  if (rep.contains("targets"))
    for (const auto& tj : rep.at("targets")) {
      report::Target tg;
      tg.name = get<std::string>(tj, "name", "");
      if (const auto v = opt<double>(tj, "f_ghz")) tg.f = *v * 1e9;
      if (const auto v = opt<double>(tj, "kappa_mhz")) tg.kappa = *v * 1e6;
      if (tg.name.empty()) throw ConfigError("report target without a name");
      c.targets.push_back(tg);
    }
  c.freq_tol = get<double>(rep, "freq_tol", 0.003);
  c.kappa_tol = get<double>(rep, "kappa_tol", 0.16);

  for (const auto* p : {&c.gds, &c.annotations})
    if (!p->empty() && !fs::is_regular_file(*p)) throw ConfigError("referenced file not found: " + p->string());
  return c;
}

inline ProjectConfig load(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  if (!fs::is_regular_file(path)) throw ConfigError("project config not found: " + path.string());
  json doc;
  try {
    std::ifstream in(path);
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(std::move(doc), path);
}

}  // namespace cqedtk::project
