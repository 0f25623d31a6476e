#pragma once

// Solver configuration for the three problem classes and its Palace JSON
// serialization. Everything schema-specific lives in namespace `palace`.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "analytic.hpp"
#include "error.hpp"
#include "layout.hpp"
#include "meshplan.hpp"

namespace cqedtk::solver {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ProblemType { electrostatic, eigenmode, driven };

inline const char* to_string(ProblemType p) {
  switch (p) {
    case ProblemType::electrostatic: return "electrostatic";
    case ProblemType::eigenmode: return "eigenmode";
    default: return "driven";
  }
}

inline ProblemType parse_problem(const std::string& s) {
  if (s == "electrostatic") return ProblemType::electrostatic;
  if (s == "eigenmode" || s == "eigen") return ProblemType::eigenmode;
  if (s == "driven") return ProblemType::driven;
  throw ConfigError("unknown problem type '" + s + "'");
}

struct Material {
  std::string name;
  double relative_permittivity = 1.0;
  double loss_tangent = 0.0;

  void validate() const {
    if (!(relative_permittivity >= 1.0)) throw ConfigError("material '" + name + "': permittivity must be >= 1");
    if (!(loss_tangent >= 0.0)) throw ConfigError("material '" + name + "': loss tangent must be >= 0");
  }
  friend bool operator==(const Material&, const Material&) = default;
};

/// Cryogenic float-zone silicon.
inline Material silicon() { return {"silicon", 11.49, 2.3e-6}; }
inline Material vacuum() { return {"vacuum", 1.0, 0.0}; }

struct Materials {
  Material substrate = silicon();
  Material air = vacuum();
};

/// A mesh group by name and integer attribute.
struct GroupRef {
  std::string name;
  int attribute = 0;
  friend bool operator==(const GroupRef&, const GroupRef&) = default;
};

struct MaterialAssignment {
  GroupRef domain;
  Material material;
  friend bool operator==(const MaterialAssignment&, const MaterialAssignment&) = default;
};

struct PortSpec {
  GroupRef group;
  double impedance = 50.0;
  bool excited = false;
  layout::Direction direction = layout::Direction::plus_x;
  friend bool operator==(const PortSpec&, const PortSpec&) = default;
};

/// Linearized junction: lumped inductor with no parallel R or C.
struct InductorSpec {
  GroupRef group;
  double inductance = 0.0;  // H
  layout::Direction direction = layout::Direction::plus_x;
  friend bool operator==(const InductorSpec&, const InductorSpec&) = default;
};

struct EigenSettings {
  int target_count = 1;
  double shift_ghz = 0.0;
  double tolerance = 1e-8;
  friend bool operator==(const EigenSettings&, const EigenSettings&) = default;
};

struct DrivenSettings {
  double f_min_ghz = 0.0;
  double f_max_ghz = 0.0;
  double f_step_ghz = 0.0;
  double adaptive_tolerance = 1e-9;
  friend bool operator==(const DrivenSettings&, const DrivenSettings&) = default;
};

struct SolveSpec {
  ProblemType problem = ProblemType::eigenmode;
  std::string mesh_ref;
  double length_unit = mesh::script_length_unit;
  int element_order = 4;
  std::vector<MaterialAssignment> materials;
  std::vector<GroupRef> pec_groups;
  std::vector<GroupRef> absorbing_groups;
  std::vector<GroupRef> terminals;
  std::vector<PortSpec> ports;
  std::vector<InductorSpec> inductors;
  std::optional<EigenSettings> eigen;
  std::optional<DrivenSettings> driven;
  std::string output_dir = "postpro";

  friend bool operator==(const SolveSpec&, const SolveSpec&) = default;

  void validate() const {
    for (const auto& m : materials) m.material.validate();
    if (element_order < 1 || element_order > 8) throw ConfigError("element order must be in [1, 8]");
    if (eigen.has_value() != (problem == ProblemType::eigenmode))
      throw ConfigError("eigen settings are required exactly for eigenmode problems");
    if (driven.has_value() != (problem == ProblemType::driven))
      throw ConfigError("driven settings are required exactly for driven problems");
    if (eigen) {
      if (eigen->target_count < 1) throw ConfigError("eigenmode target count must be >= 1");
      if (!(eigen->shift_ghz > 0.0)) throw ConfigError("eigenmode frequency shift must be positive");
    }
    if (driven) {
      if (!(driven->f_min_ghz > 0.0 && driven->f_min_ghz < driven->f_max_ghz))
        throw ConfigError("driven band must satisfy 0 < f_min < f_max");
      if (!(driven->f_step_ghz > 0.0)) throw ConfigError("driven frequency step must be positive");
      if (!(driven->adaptive_tolerance > 0.0)) throw ConfigError("adaptive tolerance must be positive");
      const auto excited = std::count_if(ports.begin(), ports.end(), [](const PortSpec& p) { return p.excited; });
      if (excited != 1)
        throw ConfigError("driven problems need exactly one excited port, found " + std::to_string(excited));
    }
    if (problem == ProblemType::electrostatic && terminals.size() < 2)
      throw ConfigError("electrostatic extraction needs at least 2 terminals, found " +
                        std::to_string(terminals.size()));
    for (const auto& p : ports)
      if (!(p.impedance > 0.0)) throw ConfigError("port '" + p.group.name + "' impedance must be positive");
    for (const auto& l : inductors)
      if (!(l.inductance > 0.0)) throw ConfigError("junction '" + l.group.name + "' has no inductance");
  }
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

namespace detail {

inline GroupRef ref(const mesh::BoundaryGroup& g) { return {g.name, g.attribute}; }

inline SolveSpec common(const mesh::MeshPlan& plan, const Materials& mats, ProblemType problem,
                        std::string mesh_ref) {
  SolveSpec s;
  s.problem = problem;
  s.mesh_ref = std::move(mesh_ref);
  s.element_order = plan.controls.order;
  const auto* sub = plan.find_domain("substrate");
  const auto* air = plan.find_domain("air");
  if (!sub || !air) throw ConfigError("mesh plan lacks substrate/air domains");
  s.materials = {{{sub->name, sub->attribute}, mats.substrate}, {{air->name, air->attribute}, mats.air}};
  return s;
}

inline std::vector<const mesh::BoundaryGroup*> groups_of(const mesh::MeshPlan& plan, mesh::GroupKind kind) {
  std::vector<const mesh::BoundaryGroup*> out;
  for (const auto& g : plan.boundary_groups)
    if (g.kind == kind) out.push_back(&g);
  return out;
}

inline void add_ports(SolveSpec& s, const mesh::MeshPlan& plan) {
  for (const auto* g : groups_of(plan, mesh::GroupKind::port)) {
    const auto& site = plan.layout.ports.at(g->site);
    s.ports.push_back({ref(*g), site.impedance, site.excited, site.direction});
  }
}

inline void add_inductors(SolveSpec& s, const mesh::MeshPlan& plan) {
  for (const auto* g : groups_of(plan, mesh::GroupKind::junction)) {
    const auto& site = plan.layout.junctions.at(g->site);
    s.inductors.push_back({ref(*g), site.inductance, site.direction});
  }
}

inline void add_metal(SolveSpec& s, const mesh::MeshPlan& plan, bool terminals_are_pec) {
  for (const auto* g : groups_of(plan, mesh::GroupKind::metal)) s.pec_groups.push_back(ref(*g));
  for (const auto* g : groups_of(plan, mesh::GroupKind::terminal))
    (terminals_are_pec ? s.pec_groups : s.terminals).push_back(ref(*g));
}

inline void add_far_field(SolveSpec& s, const mesh::MeshPlan& plan, bool absorbing) {
  for (const auto* g : groups_of(plan, mesh::GroupKind::far_field))
    (absorbing ? s.absorbing_groups : s.pec_groups).push_back(ref(*g));
}

}  // namespace detail

/// Terminals are unit-voltage boundaries; the remaining metal and the far
/// field are grounded.
inline SolveSpec make_electrostatic(const mesh::MeshPlan& plan, const Materials& mats = {},
                                    std::string mesh_ref = "mesh.msh") {
  SolveSpec s = detail::common(plan, mats, ProblemType::electrostatic, std::move(mesh_ref));
  detail::add_metal(s, plan, false);
  detail::add_far_field(s, plan, false);
  s.validate();
  return s;
}

/// Junctions become lumped inductors, so the solver reports their energy
/// participation. Ports are kept as matched loads so that mode Q includes
/// external loss.
inline SolveSpec make_eigenmode(const mesh::MeshPlan& plan, const Materials& mats, int target_count,
                                double shift_ghz, std::string mesh_ref = "mesh.msh") {
  SolveSpec s = detail::common(plan, mats, ProblemType::eigenmode, std::move(mesh_ref));
  detail::add_metal(s, plan, true);
  detail::add_far_field(s, plan, false);
  detail::add_ports(s, plan);
  for (auto& p : s.ports) p.excited = false;
  detail::add_inductors(s, plan);
  s.eigen = EigenSettings{target_count, shift_ghz};
  s.validate();
  return s;
}

inline SolveSpec make_driven(const mesh::MeshPlan& plan, const Materials& mats, double f_min_ghz,
                             double f_max_ghz, double f_step_ghz, double adaptive_tolerance = 1e-9,
                             std::string mesh_ref = "mesh.msh") {
  SolveSpec s = detail::common(plan, mats, ProblemType::driven, std::move(mesh_ref));
  detail::add_metal(s, plan, true);
  detail::add_far_field(s, plan, true);
  detail::add_ports(s, plan);
  if (s.ports.empty()) throw ConfigError("driven problems need at least one port");
  detail::add_inductors(s, plan);
  s.driven = DrivenSettings{f_min_ghz, f_max_ghz, f_step_ghz, adaptive_tolerance};
  s.validate();
  return s;
}

/// 0.8 x the quarter-wave estimate of the longest CPW run (or the named one).
inline double default_eigen_shift_ghz(const layout::LayoutModel& lay, const Material& substrate,
                                      const std::string& reference_cpw = {}) {
  const layout::CpwSpec* pick = nullptr;
  double best = 0.0;
  for (const auto& c : lay.cpw_specs) {
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < c.centerline.size(); ++i) len += distance(c.centerline[i], c.centerline[i + 1]);
    if (!reference_cpw.empty() ? c.name == reference_cpw : len > best) {
      pick = &c;
      best = len;
    }
  }
  if (!pick || !(best > 0.0)) throw ConfigError("cannot estimate eigenmode shift: no usable CPW centerline");
  const double eps_eff = 0.5 * (substrate.relative_permittivity + 1.0);
  return 0.8 * analytic::quarter_wave_freq(best, eps_eff) * 1e-9;
}

// ---------------------------------------------------------------------------
// Palace adapter (configuration schema as of Palace 0.13)
// ---------------------------------------------------------------------------

namespace palace {

inline constexpr const char* schema_version = "0.13";

inline const char* problem_name(ProblemType p) {
  switch (p) {
    case ProblemType::electrostatic: return "Electrostatic";
    case ProblemType::eigenmode: return "Eigenmode";
    default: return "Driven";
  }
}

inline nlohmann::ordered_json attributes(const std::vector<GroupRef>& groups) {
  auto a = nlohmann::ordered_json::array();
  for (const auto& g : groups) a.push_back(g.attribute);
  return a;
}

/// Deterministic Palace configuration document.
inline std::string serialize(const SolveSpec& s) {
  s.validate();
  using json = nlohmann::ordered_json;
  json doc;
  doc["Problem"] = {{"Type", problem_name(s.problem)}, {"Verbose", 2}, {"Output", s.output_dir}};
  doc["Model"] = {{"Mesh", s.mesh_ref}, {"L0", s.length_unit}};

  json mats = json::array();
  for (const auto& m : s.materials)
    mats.push_back({{"Attributes", {m.domain.attribute}},
                    {"Permeability", 1.0},
                    {"Permittivity", m.material.relative_permittivity},
                    {"LossTan", m.material.loss_tangent}});
  doc["Domains"] = {{"Materials", mats}};

  json bnd = json::object();
  if (!s.pec_groups.empty()) bnd["PEC"] = {{"Attributes", attributes(s.pec_groups)}};
  if (!s.absorbing_groups.empty()) bnd["Absorbing"] = {{"Attributes", attributes(s.absorbing_groups)}, {"Order", 1}};
  if (!s.terminals.empty()) {
    json terms = json::array();
    int index = 0;
    for (const auto& t : s.terminals) terms.push_back({{"Index", ++index}, {"Attributes", {t.attribute}}});
    bnd["Terminal"] = terms;
  }
  if (!s.ports.empty() || !s.inductors.empty()) {
    json lumped = json::array();
    int index = 0;
    for (const auto& p : s.ports) {
      json e = {{"Index", ++index}, {"Attributes", {p.group.attribute}}, {"Direction", layout::to_string(p.direction)},
                {"R", p.impedance}};
      if (p.excited) e["Excitation"] = true;
      lumped.push_back(e);
    }
    for (const auto& l : s.inductors)
      lumped.push_back({{"Index", ++index},
                        {"Attributes", {l.group.attribute}},
                        {"Direction", layout::to_string(l.direction)},
                        {"L", l.inductance}});
    bnd["LumpedPort"] = lumped;
  }
  doc["Boundaries"] = bnd;

  json solver = {{"Order", s.element_order}, {"Device", "CPU"}};
  switch (s.problem) {
    case ProblemType::electrostatic: solver["Electrostatic"] = {{"Save", 0}}; break;
    case ProblemType::eigenmode:
      solver["Eigenmode"] = {{"N", s.eigen->target_count},
                             {"Target", s.eigen->shift_ghz},
                             {"Tol", s.eigen->tolerance},
                             {"Save", 0}};
      break;
    case ProblemType::driven:
      solver["Driven"] = {{"MinFreq", s.driven->f_min_ghz},
                          {"MaxFreq", s.driven->f_max_ghz},
                          {"FreqStep", s.driven->f_step_ghz},
                          {"AdaptiveTol", s.driven->adaptive_tolerance},
                          {"SaveStep", 0}};
      break;
  }
  solver["Linear"] = {{"Type", "Default"}, {"KSPType", "GMRES"}, {"Tol", 1e-8}, {"MaxIts", 200}};
  doc["Solver"] = solver;
  return doc.dump(2) + "\n";
}

/// attribute -> name, for recovering group names the document cannot carry.
using GroupTable = std::map<int, std::string>;

inline GroupTable group_table(const mesh::MeshPlan& plan) {
  GroupTable t;
  for (const auto& d : plan.domains) t[d.attribute] = d.name;
  for (const auto& g : plan.boundary_groups) t[g.attribute] = g.name;
  return t;
}

namespace detail {

inline GroupRef lookup(const GroupTable& table, int attr) {
  const auto it = table.find(attr);
  return {it == table.end() ? "attr" + std::to_string(attr) : it->second, attr};
}

inline std::vector<GroupRef> lookup_all(const GroupTable& table, const nlohmann::json& attrs) {
  std::vector<GroupRef> out;
  for (const auto& a : attrs) out.push_back(lookup(table, a.get<int>()));
  return out;
}

inline int single_attribute(const nlohmann::json& entry) {
  const auto& a = entry.at("Attributes");
  if (a.size() != 1) throw ConfigError("lumped element with multiple attributes is not supported");
  return a[0].get<int>();
}

inline Material known_material(double eps, double tan, const std::string& fallback) {
  for (const Material& m : {silicon(), vacuum()})
    if (m.relative_permittivity == eps && m.loss_tangent == tan) return m;
  return {fallback, eps, tan};
}

}  // namespace detail

inline SolveSpec parse(const std::string& text, const GroupTable& table = {}) {
  SolveSpec s;
  try {
    const auto doc = nlohmann::json::parse(text);
    const std::string type = doc.at("Problem").at("Type").get<std::string>();
    if (type == "Electrostatic") s.problem = ProblemType::electrostatic;
    else if (type == "Eigenmode") s.problem = ProblemType::eigenmode;
    else if (type == "Driven") s.problem = ProblemType::driven;
    else throw ConfigError("unsupported Problem.Type '" + type + "'");
    s.output_dir = doc.at("Problem").value("Output", std::string("postpro"));
    s.mesh_ref = doc.at("Model").at("Mesh").get<std::string>();
    s.length_unit = doc.at("Model").value("L0", 1.0);
    for (const auto& m : doc.at("Domains").at("Materials")) {
      for (const auto& a : m.at("Attributes")) {
        const GroupRef g = detail::lookup(table, a.get<int>());
        s.materials.push_back(
            {g, detail::known_material(m.value("Permittivity", 1.0), m.value("LossTan", 0.0), g.name)});
      }
    }
    const auto& b = doc.at("Boundaries");
    if (b.contains("PEC")) s.pec_groups = detail::lookup_all(table, b["PEC"].at("Attributes"));
    if (b.contains("Absorbing")) s.absorbing_groups = detail::lookup_all(table, b["Absorbing"].at("Attributes"));
    if (b.contains("Terminal"))
      for (const auto& t : b["Terminal"])
        for (const auto& a : t.at("Attributes")) s.terminals.push_back(detail::lookup(table, a.get<int>()));
    if (b.contains("LumpedPort"))
      for (const auto& p : b["LumpedPort"]) {
        const GroupRef g = detail::lookup(table, detail::single_attribute(p));
        const auto dir = layout::parse_direction(p.value("Direction", std::string("+X")));
        if (p.contains("L") && !p.contains("R")) {
          s.inductors.push_back({g, p["L"].get<double>(), dir});
        } else {
          const bool excited = p.contains("Excitation") &&
                               (p["Excitation"].is_boolean() ? p["Excitation"].get<bool>()
                                                             : p["Excitation"].get<int>() != 0);
          s.ports.push_back({g, p.value("R", 50.0), excited, dir});
        }
      }
    const auto& sv = doc.at("Solver");
    s.element_order = sv.value("Order", 1);
    if (sv.contains("Eigenmode")) {
      const auto& e = sv["Eigenmode"];
      s.eigen = EigenSettings{e.value("N", 1), e.value("Target", 0.0), e.value("Tol", 1e-8)};
    }
    if (sv.contains("Driven")) {
      const auto& d = sv["Driven"];
      s.driven = DrivenSettings{d.at("MinFreq").get<double>(), d.at("MaxFreq").get<double>(),
                                d.at("FreqStep").get<double>(), d.value("AdaptiveTol", 1e-9)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed solver configuration: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace palace

inline std::string serialize_spec(const SolveSpec& s) { return palace::serialize(s); }
inline SolveSpec parse_spec(const std::string& text, const palace::GroupTable& table = {}) {
  return palace::parse(text, table);
}

}  // namespace cqedtk::solver
