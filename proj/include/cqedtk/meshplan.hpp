#pragma once

// Mesh plan: refinement law, domain/boundary grouping and a Gmsh .geo
// script (OpenCASCADE kernel) realizing it.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "error.hpp"
#include "geometry.hpp"
#include "layout.hpp"

namespace cqedtk::mesh {

class MeshError : public Error {
 public:
  using Error::Error;
};

/// S_min = 1.5 W_tr 2^-r.
inline double min_mesh_size(double trace_width, double r) {
  if (!(trace_width > 0.0)) throw MeshError("trace width must be positive");
  return 1.5 * trace_width * std::exp2(-r);
}

struct AirPadding {
  double x = 1e-3;
  double y = 1e-3;
  double z = 3e-3;  // above the metal plane and below the substrate
};

struct MeshControls {
  double r = 1.5;
  int order = 4;
  std::optional<double> trace_width;  // overrides the governing CPW
  std::optional<double> s_max;        // default 20 S_min
  double growth_rate = 1.3;
  double substrate_thickness = 525e-6;
  AirPadding air_padding;
};

/// Controls with every derived quantity filled in.
struct ResolvedControls {
  double r = 0.0;
  int order = 0;
  double trace_width = 0.0;
  double gap = 0.0;
  double s_min = 0.0;
  double s_max = 0.0;
  double growth_rate = 0.0;
  double substrate_thickness = 0.0;
  AirPadding air_padding;
};

enum class GroupKind { far_field, metal, terminal, port, junction };

struct Domain {
  std::string name;
  int attribute = 0;
};

struct BoundaryGroup {
  std::string name;
  int attribute = 0;
  GroupKind kind = GroupKind::metal;
  std::vector<std::size_t> polygons;  // metal/terminal: indices into layout.metal_polygons
  std::size_t site = 0;               // port/junction: index into layout.ports / layout.junctions
};

/// Linear distance-threshold grading away from metal edges:
/// size(d) = min(S_max, S_min + (g - 1) max(0, d - band)).
struct SizeField {
  double s_min = 0.0;
  double s_max = 0.0;
  double band = 0.0;
  double growth_rate = 0.0;

  double dist_max() const { return band + (s_max - s_min) / (growth_rate - 1.0); }
  double at_distance(double d) const {
    return std::min(s_max, s_min + (growth_rate - 1.0) * std::max(0.0, d - band));
  }
};

struct Box3 {
  double x0, y0, z0, x1, y1, z1;
};

struct MeshPlan {
  ResolvedControls controls;
  layout::LayoutModel layout;
  Box3 substrate{};
  Box3 air{};
  std::vector<Domain> domains;
  std::vector<BoundaryGroup> boundary_groups;
  SizeField size_field;

  const BoundaryGroup* find_group(const std::string& name) const {
    for (const auto& g : boundary_groups)
      if (g.name == name) return &g;
    return nullptr;
  }
  const Domain* find_domain(const std::string& name) const {
    for (const auto& d : domains)
      if (d.name == name) return &d;
    return nullptr;
  }

  /// Distance in the metal plane from p to the nearest metal edge.
  double edge_distance(Vec2 p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& poly : layout.metal_polygons)
      for (std::size_t i = 0; i < poly.size(); ++i)
        best = std::min(best, distance_to_segment(p, poly[i], poly[(i + 1) % poly.size()]));
    return best;
  }
  double target_size(Vec2 p) const { return size_field.at_distance(edge_distance(p)); }
};

/// Governing CPW: the narrowest trace, since it sets the finest feature.
inline const layout::CpwSpec* governing_cpw(const layout::LayoutModel& lay) {
  const layout::CpwSpec* best = nullptr;
  for (const auto& c : lay.cpw_specs)
    if (!best || c.trace_width < best->trace_width) best = &c;
  return best;
}

inline ResolvedControls resolve_controls(const layout::LayoutModel& lay, const MeshControls& c) {
  ResolvedControls out;
  out.r = c.r;
  out.order = c.order;
  if (c.order < 1 || c.order > 8) throw MeshError("element order must be in [1, 8], got " + std::to_string(c.order));
  if (!std::isfinite(c.r)) throw MeshError("refinement ratio r must be finite");
  const layout::CpwSpec* cpw = governing_cpw(lay);
  if (c.trace_width) {
    out.trace_width = *c.trace_width;
  } else if (cpw) {
    out.trace_width = cpw->trace_width;
  } else {
    throw MeshError("layout has no CPW metadata; set an explicit trace width");
  }
  // Refinement band: one gap width; without CPW metadata fall back to the trace width.
  out.gap = cpw ? cpw->gap : out.trace_width;
  out.s_min = min_mesh_size(out.trace_width, c.r);
  out.s_max = c.s_max.value_or(20.0 * out.s_min);
  if (!(out.s_min <= out.s_max)) throw MeshError("S_min exceeds S_max");
  if (!(c.growth_rate > 1.0)) throw MeshError("growth rate must exceed 1");
  if (!(c.substrate_thickness > 0.0)) throw MeshError("substrate thickness must be positive");
  if (!(c.air_padding.x > 0.0 && c.air_padding.y > 0.0 && c.air_padding.z > 0.0))
    throw MeshError("air padding must be positive on every axis (far field would touch metal)");
  out.growth_rate = c.growth_rate;
  out.substrate_thickness = c.substrate_thickness;
  out.air_padding = c.air_padding;
  return out;
}

inline MeshPlan build_plan(const layout::LayoutModel& lay, const MeshControls& controls) {
  MeshPlan plan;
  plan.controls = resolve_controls(lay, controls);
  plan.layout = lay;
  const Rect chip = lay.chip_extent;
  if (chip.empty() || !(chip.width() > 0.0 && chip.height() > 0.0)) throw MeshError("chip extent is empty");
  const double tol = 1e-9 * std::max(chip.width(), chip.height());

  for (std::size_t i = 0; i < lay.metal_polygons.size(); ++i)
    if (!chip.contains(bounding_box(lay.metal_polygons[i]), tol))
      throw MeshError("metal polygon " + std::to_string(i) + " extends beyond the chip extent");
  std::vector<std::pair<std::string, Rect>> sites;
  for (const auto& p : lay.ports) sites.emplace_back("port '" + p.name + "'", p.rect);
  for (const auto& j : lay.junctions) sites.emplace_back("junction '" + j.name + "'", j.rect);
  for (const auto& [name, rect] : sites)
    if (!chip.contains(rect, tol)) throw MeshError(name + " lies outside the substrate/air interface");
  for (std::size_t i = 0; i < sites.size(); ++i)
    for (std::size_t k = i + 1; k < sites.size(); ++k)
      if (sites[i].second.overlaps(sites[k].second))
        throw MeshError(sites[i].first + " overlaps " + sites[k].first);

  const auto& rc = plan.controls;
  plan.substrate = {chip.min.x, chip.min.y, -rc.substrate_thickness, chip.max.x, chip.max.y, 0.0};
  plan.air = {chip.min.x - rc.air_padding.x, chip.min.y - rc.air_padding.y,
              -rc.substrate_thickness - rc.air_padding.z, chip.max.x + rc.air_padding.x,
              chip.max.y + rc.air_padding.y, rc.air_padding.z};
  plan.domains = {{"substrate", 1}, {"air", 2}};

  int attr = 3;
  plan.boundary_groups.push_back({"far_field", attr++, GroupKind::far_field, {}, 0});
  std::vector<bool> is_terminal(lay.metal_polygons.size(), false);
  for (const auto& t : lay.terminals) is_terminal.at(t.polygon) = true;
  BoundaryGroup metal{"metal", attr++, GroupKind::metal, {}, 0};
  for (std::size_t i = 0; i < lay.metal_polygons.size(); ++i)
    if (!is_terminal[i]) metal.polygons.push_back(i);
  plan.boundary_groups.push_back(metal);
  for (const auto& t : lay.terminals)
    plan.boundary_groups.push_back({"terminal_" + t.name, attr++, GroupKind::terminal, {t.polygon}, 0});
  for (std::size_t i = 0; i < lay.ports.size(); ++i)
    plan.boundary_groups.push_back({"port_" + lay.ports[i].name, attr++, GroupKind::port, {}, i});
  for (std::size_t i = 0; i < lay.junctions.size(); ++i)
    plan.boundary_groups.push_back({"junction_" + lay.junctions[i].name, attr++, GroupKind::junction, {}, i});

  plan.size_field = {rc.s_min, rc.s_max, rc.gap, rc.growth_rate};
  return plan;
}

// ---------------------------------------------------------------------------
// .geo emission
// ---------------------------------------------------------------------------

namespace detail {

/// Script coordinates are in micrometres.
inline std::string um(double metres) { return fmt::format("{:.12g}", metres * 1e6); }

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

/// Length unit of the emitted script, in metres.
inline constexpr double script_length_unit = 1e-6;

inline std::string emit_mesh_script(const MeshPlan& plan) {
  using detail::um;
  const auto& lay = plan.layout;
  std::string out;
  const auto line = [&out](const std::string& s) {
    out += s;
    out += '\n';
  };

  line("// cqedtk mesh plan; lengths in um");
  line(fmt::format("// r = {:.6g}, S_min = {} um, S_max = {} um, growth = {:.6g}", plan.controls.r,
                   um(plan.controls.s_min), um(plan.controls.s_max), plan.controls.growth_rate));
  line("SetFactory(\"OpenCASCADE\");");
  line("Geometry.OCCBooleanPreserveNumbering = 1;");
  line("Mesh.MeshSizeExtendFromBoundary = 0;");
  line("Mesh.MeshSizeFromPoints = 0;");
  line("Mesh.MeshSizeFromCurvature = 0;");
  line("");

  // Planar surfaces get explicit tags first so the boxes' faces number after them.
  int point = 0, curve = 0;
  std::vector<int> metal_surface(lay.metal_polygons.size());
  line("// metal (zero thickness, z = 0)");
  for (std::size_t i = 0; i < lay.metal_polygons.size(); ++i) {
    const auto& poly = lay.metal_polygons[i];
    const int first_point = point + 1;
    for (Vec2 v : poly) line(fmt::format("Point({}) = {{{}, {}, 0}};", ++point, um(v.x), um(v.y)));
    std::vector<int> loop;
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const int a = first_point + static_cast<int>(k);
      const int b = first_point + static_cast<int>((k + 1) % poly.size());
      line(fmt::format("Line({}) = {{{}, {}}};", ++curve, a, b));
      loop.push_back(curve);
    }
    const int tag = static_cast<int>(i) + 1;
    line(fmt::format("Curve Loop({}) = {{{}}};", tag, detail::join_ints(loop)));
    line(fmt::format("Plane Surface({}) = {{{}}};", tag, tag));
    metal_surface[i] = tag;
  }
  int surface = static_cast<int>(lay.metal_polygons.size());
  std::vector<int> port_surface, junction_surface;
  const auto rectangle = [&](const Rect& r) {
    line(fmt::format("Rectangle({}) = {{{}, {}, 0, {}, {}}};", ++surface, um(r.min.x), um(r.min.y), um(r.width()),
                     um(r.height())));
    return surface;
  };
  if (!lay.ports.empty()) line("// lumped ports");
  for (const auto& p : lay.ports) port_surface.push_back(rectangle(p.rect));
  if (!lay.junctions.empty()) line("// linearized junctions");
  for (const auto& j : lay.junctions) junction_surface.push_back(rectangle(j.rect));
  line("");

  const auto& s = plan.substrate;
  const auto& a = plan.air;
  line("// substrate and air box");
  line(fmt::format("Box(1) = {{{}, {}, {}, {}, {}, {}}};", um(s.x0), um(s.y0), um(s.z0), um(s.x1 - s.x0),
                   um(s.y1 - s.y0), um(s.z1 - s.z0)));
  line(fmt::format("Box(2) = {{{}, {}, {}, {}, {}, {}}};", um(a.x0), um(a.y0), um(a.z0), um(a.x1 - a.x0),
                   um(a.y1 - a.y0), um(a.z1 - a.z0)));
  line(fmt::format("BooleanFragments{{ Volume{{1, 2}}; Delete; }}{{ Surface{{1:{}}}; Delete; }}", surface));
  line("");

  const double e = 1e-3;  // um; selection slack
  const auto bbox = [](const double* b0, const double* b1) {
    return fmt::format("{:.12g}, {:.12g}, {:.12g}, {:.12g}, {:.12g}, {:.12g}", b0[0], b0[1], b0[2], b1[0], b1[1], b1[2]);
  };
  const double s0[3] = {s.x0 * 1e6 - e, s.y0 * 1e6 - e, s.z0 * 1e6 - e};
  const double s1[3] = {s.x1 * 1e6 + e, s.y1 * 1e6 + e, s.z1 * 1e6 + e};
  line(fmt::format("sub() = Volume In BoundingBox{{{}}};", bbox(s0, s1)));
  line("air() = Volume \"*\";");
  line("air() -= sub();");
  const double lo[3] = {a.x0 * 1e6, a.y0 * 1e6, a.z0 * 1e6};
  const double hi[3] = {a.x1 * 1e6, a.y1 * 1e6, a.z1 * 1e6};
  line("ff() = {};");
  for (int axis = 0; axis < 3; ++axis)
    for (int side = 0; side < 2; ++side) {
      double b0[3], b1[3];
      for (int k = 0; k < 3; ++k) {
        b0[k] = lo[k] - e;
        b1[k] = hi[k] + e;
      }
      const double plane = side ? hi[axis] : lo[axis];
      b0[axis] = plane - e;
      b1[axis] = plane + e;
      line(fmt::format("ff() += Surface In BoundingBox{{{}}};", bbox(b0, b1)));
    }
  line("");

  line("Physical Volume(\"substrate\", 1) = {sub()};");
  line("Physical Volume(\"air\", 2) = {air()};");
  for (const auto& g : plan.boundary_groups) {
    std::vector<int> tags;
    switch (g.kind) {
      case GroupKind::far_field:
        line(fmt::format("Physical Surface(\"{}\", {}) = {{ff()}};", g.name, g.attribute));
        continue;
      case GroupKind::metal:
      case GroupKind::terminal:
        for (auto i : g.polygons) tags.push_back(metal_surface[i]);
        break;
      case GroupKind::port: tags.push_back(port_surface[g.site]); break;
      case GroupKind::junction: tags.push_back(junction_surface[g.site]); break;
    }
    line(fmt::format("Physical Surface(\"{}\", {}) = {{{}}};", g.name, g.attribute, detail::join_ints(tags)));
  }
  line("");

  // Distance sampling dense enough that the longest edge is resolved at S_min.
  double longest = 0.0;
  for (const auto& poly : lay.metal_polygons)
    for (std::size_t k = 0; k < poly.size(); ++k)
      longest = std::max(longest, distance(poly[k], poly[(k + 1) % poly.size()]));
  const int sampling = std::clamp(static_cast<int>(std::ceil(longest / plan.size_field.s_min)), 20, 2000);
  const auto& f = plan.size_field;
  line("// refinement near metal edges (CPW gaps)");
  // Edge tags are taken after fragmentation; ports split the original lines.
  line(fmt::format("edges() = Abs(Boundary{{ Surface{{{}}}; }});", detail::join_ints(metal_surface)));
  line("Field[1] = Distance;");
  line("Field[1].CurvesList = {edges()};");
  line(fmt::format("Field[1].Sampling = {};", sampling));
  line("Field[2] = Threshold;");
  line("Field[2].InField = 1;");
  line(fmt::format("Field[2].SizeMin = {};", um(f.s_min)));
  line(fmt::format("Field[2].SizeMax = {};", um(f.s_max)));
  line(fmt::format("Field[2].DistMin = {};", um(f.band)));
  line(fmt::format("Field[2].DistMax = {};", um(f.dist_max())));
  line("Background Field = 2;");
  line(fmt::format("Mesh.MeshSizeMax = {};", um(f.s_max)));
  return out;
}

}  // namespace cqedtk::mesh
