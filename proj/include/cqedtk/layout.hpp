#pragma once

// Annotated EM layout: metal polygons, lumped port and junction sites,
// capacitance terminals and coplanar-waveguide metadata.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "gdsii.hpp"
#include "geometry.hpp"

namespace cqedtk::layout {

class LayoutError : public Error {
 public:
  using Error::Error;
};

/// Axis along which a lumped element's uniform field points.
enum class Direction { plus_x, minus_x, plus_y, minus_y };

inline const char* to_string(Direction d) {
  switch (d) {
    case Direction::plus_x: return "+X";
    case Direction::minus_x: return "-X";
    case Direction::plus_y: return "+Y";
    default: return "-Y";
  }
}

inline Direction parse_direction(const std::string& s) {
  if (s == "+X" || s == "X" || s == "x" || s == "+x") return Direction::plus_x;
  if (s == "-X" || s == "-x") return Direction::minus_x;
  if (s == "+Y" || s == "Y" || s == "y" || s == "+y") return Direction::plus_y;
  if (s == "-Y" || s == "-y") return Direction::minus_y;
  throw LayoutError("unknown direction '" + s + "' (expected +X, -X, +Y or -Y)");
}

struct CpwSpec {
  std::string name;
  double trace_width = 0.0;  // m
  double gap = 0.0;          // m
  Polyline centerline;       // m
};

struct PortSite {
  std::string name;
  Rect rect;  // m
  double impedance = 50.0;
  bool excited = false;
  Direction direction = Direction::plus_x;
};

/// L_J = Phi_0 / (2 pi I_c).
inline double junction_inductance(double critical_current) {
  if (!(critical_current > 0.0))
    throw LayoutError("critical current must be positive, got " + std::to_string(critical_current));
  return constants::reduced_flux_quantum / critical_current;
}

struct JunctionSite {
  std::string name;
  Rect rect;  // m
  double critical_current = 0.0;  // A
  double inductance = 0.0;        // H
  Direction direction = Direction::plus_x;

  static JunctionSite make(std::string name, Rect rect, double critical_current,
                           Direction direction = Direction::plus_x) {
    return {std::move(name), rect, critical_current, junction_inductance(critical_current),
            direction};
  }
};

/// Metal island whose terminal voltage is driven in capacitance extraction.
struct Terminal {
  std::string name;
  std::size_t polygon = 0;  // index into LayoutModel::metal_polygons
};

struct LayoutModel {
  std::vector<Polygon> metal_polygons;
  Rect chip_extent;
  std::vector<PortSite> ports;
  std::vector<JunctionSite> junctions;
  std::vector<Terminal> terminals;
  std::vector<CpwSpec> cpw_specs;
};

// ---------------------------------------------------------------------------
// Curve healing
// ---------------------------------------------------------------------------

namespace detail {

/// Sagitta of the arc through a, b, c over the chord a-c; infinity when b
/// does not sit between a and c.
inline double arc_sagitta(Vec2 a, Vec2 b, Vec2 c) {
  const Vec2 ac = c - a;
  const double chord2 = dot(ac, ac);
  if (chord2 == 0.0) return std::numeric_limits<double>::infinity();
  const double t = dot(b - a, ac) / chord2;
  if (!(t > 0.0 && t < 1.0)) return std::numeric_limits<double>::infinity();
  const double twice_area = std::abs(cross(b - a, ac));
  if (twice_area == 0.0) return 0.0;
  const double ab = distance(a, b), bc = distance(b, c), chord = std::sqrt(chord2);
  const double radius = ab * bc * chord / (2.0 * twice_area);
  const double half = 0.5 * chord;
  const double root = std::sqrt(std::max(0.0, radius * radius - half * half));
  const bool minor_arc = dot(a - b, c - b) < 0.0;
  return minor_arc ? half * half / (radius + root) : radius + root;
}

inline Polygon drop_duplicates(const Polygon& in, double eps) {
  Polygon out;
  for (Vec2 p : in)
    if (out.empty() || distance(out.back(), p) > eps) out.push_back(p);
  while (out.size() > 1 && distance(out.front(), out.back()) <= eps) out.pop_back();
  return out;
}

/// Removes, smallest sagitta first, every vertex whose local arc sagitta is
/// within tolerance. Returns true if anything was removed.
inline bool greedy_reduce(Polygon& poly, double tol) {
  const std::size_t n = poly.size();
  std::vector<std::size_t> prev(n), next(n);
  std::vector<double> h(n);
  std::vector<bool> alive(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    prev[i] = (i + n - 1) % n;
    next[i] = (i + 1) % n;
  }
  std::set<std::pair<double, std::size_t>> queue;
  const auto refresh = [&](std::size_t i) {
    queue.erase({h[i], i});
    h[i] = arc_sagitta(poly[prev[i]], poly[i], poly[next[i]]);
    if (h[i] <= tol) queue.insert({h[i], i});
  };
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = arc_sagitta(poly[prev[i]], poly[i], poly[next[i]]);
    if (h[i] <= tol) queue.insert({h[i], i});
  }
  std::size_t remaining = n;
  bool changed = false;
  while (!queue.empty()) {
    const auto [hi, i] = *queue.begin();
    queue.erase(queue.begin());
    if (remaining <= 3) throw LayoutError("polygon degenerates to fewer than 3 vertices");
    alive[i] = false;
    --remaining;
    changed = true;
    const std::size_t p = prev[i], q = next[i];
    next[p] = q;
    prev[q] = p;
    refresh(p);
    refresh(q);
  }
  if (changed) {
    Polygon out;
    for (std::size_t i = 0; i < n; ++i)
      if (alive[i]) out.push_back(poly[i]);
    poly = std::move(out);
  }
  return changed;
}

}  // namespace detail

/// Merges collinear runs, re-samples curved runs so that every chord's local
/// arc sagitta stays within `chord_tolerance`, and removes duplicate vertices.
/// Iterates to a fixpoint, so healing is idempotent.
inline Polygon heal_polygon(const Polygon& in, double chord_tolerance) {
  if (!(chord_tolerance > 0.0)) throw LayoutError("chord tolerance must be positive");
  const double eps = chord_tolerance * 1e-9;
  Polygon poly = detail::drop_duplicates(in, eps);
  for (;;) {
    if (poly.size() < 3) throw LayoutError("polygon degenerates to fewer than 3 vertices");
    if (!detail::greedy_reduce(poly, chord_tolerance)) break;
    poly = detail::drop_duplicates(poly, eps);
  }
  if (!is_simple(poly)) throw LayoutError("polygon is self-intersecting after healing");
  return poly;
}

inline std::vector<Polygon> heal_curves(const std::vector<Polygon>& polygons,
                                        double chord_tolerance) {
  std::vector<Polygon> out;
  out.reserve(polygons.size());
  for (const auto& p : polygons) out.push_back(heal_polygon(p, chord_tolerance));
  return out;
}

// ---------------------------------------------------------------------------
// CPW inference
// ---------------------------------------------------------------------------

namespace detail {

struct Interval {
  double lo, hi;
};

/// Metal intervals along the line p + s*dir, merged across polygons.
inline std::vector<Interval> metal_along_line(const std::vector<Polygon>& metal, Vec2 p, Vec2 dir,
                                              double merge_eps) {
  std::vector<Interval> spans;
  for (const auto& poly : metal) {
    std::vector<double> hits;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = poly[i], b = poly[(i + 1) % n];
      const double da = cross(dir, a - p), db = cross(dir, b - p);
      if ((da > 0.0) == (db > 0.0)) continue;
      const double t = da / (da - db);
      hits.push_back(dot(a + t * (b - a) - p, dir));
    }
    std::sort(hits.begin(), hits.end());
    for (std::size_t i = 0; i + 1 < hits.size(); i += 2) spans.push_back({hits[i], hits[i + 1]});
  }
  std::sort(spans.begin(), spans.end(), [](const Interval& x, const Interval& y) { return x.lo < y.lo; });
  std::vector<Interval> merged;
  for (const auto& s : spans) {
    if (!merged.empty() && s.lo <= merged.back().hi + merge_eps)
      merged.back().hi = std::max(merged.back().hi, s.hi);
    else
      merged.push_back(s);
  }
  return merged;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Measures trace width and gap by casting section lines perpendicular to
/// the centerline hint at `stations` evenly spaced points. Width and gap are
/// medians over stations; the gap is the mean of both sides.
inline CpwSpec infer_cpw(const std::vector<Polygon>& metal, const Polyline& hint,
                         Warnings* warnings = nullptr, int stations = 9) {
  if (hint.size() < 2) throw LayoutError("centerline hint needs at least 2 points");
  std::vector<double> seg_len;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < hint.size(); ++i) {
    seg_len.push_back(distance(hint[i], hint[i + 1]));
    total += seg_len.back();
  }
  if (!(total > 0.0)) throw LayoutError("centerline hint has zero length");
  Rect box;
  for (const auto& poly : metal) box.expand(bounding_box(poly));
  const double merge_eps = 1e-12 * std::max(box.width(), box.height());

  std::vector<double> widths, left_gaps, right_gaps;
  int unbounded = 0;
  for (int k = 0; k < stations; ++k) {
    double s = (k + 0.5) / stations * total;
    std::size_t seg = 0;
    while (seg + 1 < seg_len.size() && s > seg_len[seg]) s -= seg_len[seg++];
    const Vec2 a = hint[seg], b = hint[seg + 1];
    const Vec2 u = (1.0 / seg_len[seg]) * (b - a);
    const Vec2 p = a + s * u;
    const Vec2 nrm{-u.y, u.x};
    const auto spans = detail::metal_along_line(metal, p, nrm, merge_eps);
    const auto it = std::find_if(spans.begin(), spans.end(),
                                 [](const detail::Interval& iv) { return iv.lo <= 0.0 && iv.hi >= 0.0; });
    if (it == spans.end())
      throw LayoutError("centerline hint is not inside metal at station " + std::to_string(k));
    if (it == spans.begin() || std::next(it) == spans.end()) {
      ++unbounded;
      continue;
    }
    widths.push_back(it->hi - it->lo);
    left_gaps.push_back(it->lo - std::prev(it)->hi);
    right_gaps.push_back(std::next(it)->lo - it->hi);
  }
  if (widths.empty()) throw LayoutError("trace is not bounded by gaps to ground on both sides");
  if (unbounded > 0)
    warn(warnings, std::to_string(unbounded) + " of " + std::to_string(stations) +
                       " CPW stations had no ground on one side and were skipped");
  CpwSpec spec;
  spec.trace_width = detail::median(widths);
  const double gl = detail::median(left_gaps), gr = detail::median(right_gaps);
  spec.gap = 0.5 * (gl + gr);
  if (std::abs(gl - gr) > 0.05 * spec.gap)
    warn(warnings, "asymmetric CPW gaps: " + std::to_string(gl) + " m vs " + std::to_string(gr) + " m");
  spec.centerline = hint;
  return spec;
}

// ---------------------------------------------------------------------------
// Sidecar annotations
// ---------------------------------------------------------------------------

struct LayerKey {
  int layer = 0;
  std::optional<int> datatype;  // any datatype when empty

  bool matches(int l, int d) const { return l == layer && (!datatype || *datatype == d); }
};

struct Annotations {
  double length_unit = 1e-6;  // metres per annotation coordinate unit
  std::vector<LayerKey> metal_layers;
  std::optional<int> port_layer;
  std::optional<int> junction_layer;
  double default_impedance = 50.0;
  std::optional<double> default_critical_current;
  std::optional<Rect> chip_extent;
  std::vector<PortSite> ports;            // already in metres
  std::vector<JunctionSite> junctions;    // already in metres
  // Explicit directions; empty entries are inferred from the metal.
  std::vector<std::optional<Direction>> port_directions;
  std::vector<std::optional<Direction>> junction_directions;
  std::vector<std::pair<std::string, Vec2>> terminals;
  std::vector<std::pair<std::string, Polyline>> cpw_hints;
};

inline double parse_length_unit(const std::string& u) {
  if (u == "m") return 1.0;
  if (u == "mm") return 1e-3;
  if (u == "um" || u == "µm") return 1e-6;
  if (u == "nm") return 1e-9;
  throw LayoutError("unknown length unit '" + u + "'");
}

namespace detail {

inline Rect read_rect(const nlohmann::json& j, double unit) {
  if (!j.is_array() || j.size() != 4) throw LayoutError("rect must be [x0, y0, x1, y1]");
  return Rect::from_corners({j[0].get<double>() * unit, j[1].get<double>() * unit},
                            {j[2].get<double>() * unit, j[3].get<double>() * unit});
}

inline Vec2 read_point(const nlohmann::json& j, double unit) {
  if (!j.is_array() || j.size() != 2) throw LayoutError("point must be [x, y]");
  return {j[0].get<double>() * unit, j[1].get<double>() * unit};
}

inline Direction long_axis(const Rect& r) {
  return r.width() >= r.height() ? Direction::plus_x : Direction::plus_y;
}

inline bool in_any(Vec2 p, const std::vector<Polygon>& metal) {
  return std::any_of(metal.begin(), metal.end(), [&](const Polygon& poly) { return point_in_polygon(p, poly); });
}

}  // namespace detail

/// Field direction of a lumped site: the axis whose two opposite edges both
/// touch metal. Falls back to the long axis when that is ambiguous.
inline Direction infer_direction(const Rect& r, const std::vector<Polygon>& metal) {
  const Vec2 c = r.center();
  const double nx = 1e-3 * r.width(), ny = 1e-3 * r.height();
  const bool x_bridged = detail::in_any({r.min.x - nx, c.y}, metal) && detail::in_any({r.max.x + nx, c.y}, metal);
  const bool y_bridged = detail::in_any({c.x, r.min.y - ny}, metal) && detail::in_any({c.x, r.max.y + ny}, metal);
  if (x_bridged != y_bridged) return x_bridged ? Direction::plus_x : Direction::plus_y;
  return detail::long_axis(r);
}

namespace detail {

}  // namespace detail

/// Reads the sidecar annotation document (JSON). Coordinates are in
/// `length_unit`; rects are [x0, y0, x1, y1].
inline Annotations parse_annotations(const nlohmann::json& doc) {
  Annotations a;
  try {
    a.length_unit = parse_length_unit(doc.value("length_unit", std::string("um")));
    const double u = a.length_unit;
    for (const auto& m : doc.value("metal_layers", nlohmann::json::array())) {
      if (m.is_number_integer()) {
        a.metal_layers.push_back({m.get<int>(), std::nullopt});
      } else if (m.is_array() && m.size() == 2) {
        a.metal_layers.push_back({m[0].get<int>(), m[1].get<int>()});
      } else {
        throw LayoutError("metal_layers entries must be a layer or [layer, datatype]");
      }
    }
    if (doc.contains("site_layers")) {
      const auto& sl = doc["site_layers"];
      if (sl.contains("port")) a.port_layer = sl["port"].get<int>();
      if (sl.contains("junction")) a.junction_layer = sl["junction"].get<int>();
    }
    if (doc.contains("defaults")) {
      const auto& d = doc["defaults"];
      a.default_impedance = d.value("impedance", 50.0);
      if (d.contains("critical_current")) a.default_critical_current = d["critical_current"].get<double>();
    }
    if (doc.contains("chip_extent")) a.chip_extent = detail::read_rect(doc["chip_extent"], u);
    for (const auto& p : doc.value("ports", nlohmann::json::array())) {
      PortSite s;
      s.name = p.at("name").get<std::string>();
      s.rect = detail::read_rect(p.at("rect"), u);
      s.impedance = p.value("impedance", a.default_impedance);
      s.excited = p.value("excited", false);
      a.port_directions.push_back(p.contains("direction")
                                      ? std::optional(parse_direction(p["direction"].get<std::string>()))
                                      : std::nullopt);
      if (!(s.impedance > 0.0)) throw LayoutError("port '" + s.name + "' impedance must be positive");
      a.ports.push_back(s);
    }
    for (const auto& j : doc.value("junctions", nlohmann::json::array())) {
      const std::string name = j.at("name").get<std::string>();
      const Rect r = detail::read_rect(j.at("rect"), u);
      double ic = 0.0;
      if (j.contains("critical_current")) ic = j["critical_current"].get<double>();
      else if (a.default_critical_current) ic = *a.default_critical_current;
      else throw LayoutError("junction '" + name + "' has no critical_current");
      a.junction_directions.push_back(j.contains("direction")
                                          ? std::optional(parse_direction(j["direction"].get<std::string>()))
                                          : std::nullopt);
      a.junctions.push_back(JunctionSite::make(name, r, ic));
    }
    for (const auto& t : doc.value("terminals", nlohmann::json::array()))
      a.terminals.emplace_back(t.at("name").get<std::string>(), detail::read_point(t.at("point"), u));
    for (const auto& c : doc.value("cpw", nlohmann::json::array())) {
      Polyline line;
      for (const auto& pt : c.at("centerline")) line.push_back(detail::read_point(pt, u));
      a.cpw_hints.emplace_back(c.value("name", std::string("cpw") + std::to_string(a.cpw_hints.size())),
                               std::move(line));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LayoutError(std::string("malformed annotation document: ") + e.what());
  }
  if (a.metal_layers.empty()) throw LayoutError("annotation document lists no metal_layers");
  return a;
}

/// Metal polygons from the flattened layout, before healing.
inline std::vector<Polygon> select_metal(const std::vector<gds::FlatPolygon>& flat,
                                         const Annotations& ann) {
  std::vector<Polygon> out;
  for (const auto& fp : flat)
    for (const auto& key : ann.metal_layers)
      if (key.matches(fp.layer, fp.datatype)) {
        out.push_back(fp.points);
        break;
      }
  return out;
}

inline std::vector<CpwSpec> infer_cpw_specs(const std::vector<Polygon>& metal,
                                            const Annotations& ann, Warnings* warnings = nullptr) {
  std::vector<CpwSpec> specs;
  for (const auto& [name, hint] : ann.cpw_hints) {
    CpwSpec s = infer_cpw(metal, hint, warnings);
    s.name = name;
    specs.push_back(std::move(s));
  }
  return specs;
}

/// True when no sample inside `r` falls in metal, i.e. the rectangle sits in
/// the gap region and at most touches metal along its edges.
inline bool clear_of_metal(const Rect& r, const std::vector<Polygon>& metal) {
  constexpr int n = 7;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (detail::in_any({r.min.x + (i + 0.5) / n * r.width(), r.min.y + (j + 0.5) / n * r.height()}, metal))
        return false;
  return true;
}

/// Assembles the layout model. CPW metadata is measured on the unhealed
/// metal so that its width can drive the healing tolerance upstream.
inline LayoutModel build_layout(const std::vector<gds::FlatPolygon>& flat, const Annotations& ann,
                                double chord_tolerance, Warnings* warnings = nullptr) {
  LayoutModel model;
  const auto raw_metal = select_metal(flat, ann);
  if (raw_metal.empty()) throw LayoutError("no polygons on the annotated metal layers");
  model.cpw_specs = infer_cpw_specs(raw_metal, ann, warnings);
  model.metal_polygons = heal_curves(raw_metal, chord_tolerance);

  model.ports = ann.ports;
  model.junctions = ann.junctions;
  auto port_dirs = ann.port_directions;
  auto junction_dirs = ann.junction_directions;
  port_dirs.resize(model.ports.size());
  junction_dirs.resize(model.junctions.size());
  int port_counter = 0, junction_counter = 0;
  for (const auto& fp : flat) {
    if (ann.port_layer && fp.layer == *ann.port_layer) {
      PortSite s;
      s.name = "L" + std::to_string(++port_counter);
      s.rect = bounding_box(fp.points);
      s.impedance = ann.default_impedance;
      model.ports.push_back(s);
      port_dirs.push_back(std::nullopt);
    }
    if (ann.junction_layer && fp.layer == *ann.junction_layer) {
      if (!ann.default_critical_current)
        throw LayoutError("junction layer used without defaults.critical_current");
      const Rect r = bounding_box(fp.points);
      model.junctions.push_back(JunctionSite::make("L" + std::to_string(++junction_counter), r,
                                                   *ann.default_critical_current));
      junction_dirs.push_back(std::nullopt);
    }
  }

  for (std::size_t i = 0; i < model.ports.size(); ++i)
    model.ports[i].direction = port_dirs[i].value_or(infer_direction(model.ports[i].rect, model.metal_polygons));
  for (std::size_t i = 0; i < model.junctions.size(); ++i)
    model.junctions[i].direction =
        junction_dirs[i].value_or(infer_direction(model.junctions[i].rect, model.metal_polygons));

  std::set<std::string> names;
  for (const auto& p : model.ports)
    if (!names.insert("port:" + p.name).second) throw LayoutError("duplicate port name '" + p.name + "'");
  for (const auto& j : model.junctions)
    if (!names.insert("junction:" + j.name).second)
      throw LayoutError("duplicate junction name '" + j.name + "'");

  std::set<std::size_t> claimed;
  for (const auto& [name, point] : ann.terminals) {
    std::optional<std::size_t> hit;
    for (std::size_t i = 0; i < model.metal_polygons.size(); ++i)
      if (point_in_polygon(point, model.metal_polygons[i])) {
        hit = i;
        break;
      }
    if (!hit) throw LayoutError("terminal '" + name + "' point is not inside any metal polygon");
    if (!claimed.insert(*hit).second)
      throw LayoutError("terminal '" + name + "' shares a metal island with another terminal");
    model.terminals.push_back({name, *hit});
  }

  for (const auto& p : model.ports)
    if (!clear_of_metal(p.rect, model.metal_polygons))
      throw LayoutError("port '" + p.name + "' overlaps the metal interior");
  for (const auto& j : model.junctions)
    if (!clear_of_metal(j.rect, model.metal_polygons))
      throw LayoutError("junction '" + j.name + "' overlaps the metal interior");

  if (ann.chip_extent) {
    model.chip_extent = *ann.chip_extent;
  } else {
    for (const auto& poly : model.metal_polygons) model.chip_extent.expand(bounding_box(poly));
  }
  return model;
}

}  // namespace cqedtk::layout
