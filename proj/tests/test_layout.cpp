#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "cqedtk/layout.hpp"

using namespace cqedtk;
using namespace cqedtk::layout;

namespace {

constexpr double um = 1e-6;

Polygon rect_poly(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

Polygon ngon(int n, double radius, Vec2 c = {}) {
  Polygon p;
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * i / n;
    p.push_back({c.x + radius * std::cos(t), c.y + radius * std::sin(t)});
  }
  return p;
}

// Straight CPW along x: trace |y| <= w/2, ground planes beyond w/2 + s.
std::vector<Polygon> straight_cpw(double w, double s, double length = 400 * um, double ground = 200 * um) {
  const double h = w / 2;
  return {rect_poly(0, -h, length, h), rect_poly(0, h + s, length, h + s + ground),
          rect_poly(0, -h - s - ground, length, -h - s)};
}

std::vector<Polygon> transform(const std::vector<Polygon>& in, const Affine2& xf) {
  std::vector<Polygon> out;
  for (const auto& p : in) {
    Polygon q;
    for (Vec2 v : p) q.push_back(xf(v));
    out.push_back(q);
  }
  return out;
}

Polyline transform(const Polyline& in, const Affine2& xf) {
  Polyline out;
  for (Vec2 v : in) out.push_back(xf(v));
  return out;
}

}  // namespace

TEST(JunctionInductance, ThirtyNanoamps) {
  // Independent evaluation from h and e rather than the stored flux quantum.
  const double phi0 = 6.62607015e-34 / (2 * 1.602176634e-19);
  const double expected = phi0 / (2 * std::numbers::pi * 30e-9);
  EXPECT_NEAR(junction_inductance(30e-9), expected, 1e-15 * expected);
  EXPECT_NEAR(junction_inductance(30e-9), 10.970e-9, 0.001e-9);
}

TEST(JunctionInductance, UnitHenry) {
  const double ic = constants::flux_quantum / (2 * std::numbers::pi);
  EXPECT_NEAR(ic, 3.291e-16, 0.001e-16);
  EXPECT_NEAR(junction_inductance(ic), 1.0, 1e-15);
}

TEST(JunctionInductance, RejectsNonPositive) {
  EXPECT_THROW(junction_inductance(0.0), LayoutError);
  EXPECT_THROW(junction_inductance(-1e-9), LayoutError);
}

TEST(JunctionInductance, InverseProportional) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ic(1e-9, 1e-6), scale(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    const double c = ic(rng), a = scale(rng);
    const double lhs = junction_inductance(a * c), rhs = junction_inductance(c) / a;
    EXPECT_NEAR(lhs, rhs, 4e-16 * rhs);
  }
}

TEST(HealCurves, MergesCollinearMidpoint) {
  const Polygon sq{{0, 0}, {5, 0}, {10, 0}, {10, 10}, {0, 10}};
  const Polygon out = heal_polygon(sq, 0.1);
  EXPECT_EQ(out, (Polygon{{0, 0}, {10, 0}, {10, 10}, {0, 10}}));
}

TEST(HealCurves, RemovesDuplicateVertices) {
  const Polygon sq{{0, 0}, {10, 0}, {10, 0}, {10, 10}, {0, 10}, {0, 0}};
  EXPECT_EQ(heal_polygon(sq, 0.1).size(), 4u);
}

TEST(HealCurves, CoincidentTriangleIsDegenerate) {
  const Polygon tri{{0, 0}, {1, 0}, {1, 0}};
  EXPECT_THROW(heal_polygon(tri, 0.01), LayoutError);
}

TEST(HealCurves, RejectsNonPositiveTolerance) {
  EXPECT_THROW(heal_polygon(rect_poly(0, 0, 1, 1), 0.0), LayoutError);
}

TEST(HealCurves, CircleSagittaBruteForce) {
  const double r = 100 * um, tol = 1 * um;
  const Polygon circle = ngon(64, r);
  const Polygon healed = heal_polygon(circle, tol);
  EXPECT_LT(healed.size(), circle.size());
  EXPECT_TRUE(is_simple(healed));
  // Every original vertex lying between two consecutive healed vertices must
  // be within tolerance of their chord.
  double worst = 0.0;
  for (std::size_t k = 0; k < healed.size(); ++k) {
    const Vec2 a = healed[k], b = healed[(k + 1) % healed.size()];
    const auto ia = std::find(circle.begin(), circle.end(), a) - circle.begin();
    const auto ib = std::find(circle.begin(), circle.end(), b) - circle.begin();
    ASSERT_LT(ia, 64);
    ASSERT_LT(ib, 64);
    for (auto i = ia; i != ib; i = (i + 1) % 64) worst = std::max(worst, distance_to_line(circle[i], a, b));
  }
  EXPECT_LE(worst, tol);
  // Two-step chords on the true circle: R(1 - cos(pi/32)) ~ 0.48 um; three steps would exceed 1 um.
  EXPECT_NEAR(worst, r * (1 - std::cos(std::numbers::pi / 32)), 1e-9 * um);
  EXPECT_GE(healed.size(), 32u);
}

TEST(HealCurves, Idempotent) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> rad(20.0, 200.0), jitter(-0.2, 0.2);
  std::uniform_int_distribution<int> count(8, 120);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = count(rng);
    const double r = rad(rng);
    Polygon p;
    for (int i = 0; i < n; ++i) {
      const double t = 2.0 * std::numbers::pi * i / n;
      p.push_back({(r + jitter(rng)) * std::cos(t), (r + jitter(rng)) * std::sin(t)});
    }
    const double tol = 0.5 + trial * 0.05;
    const Polygon once = heal_polygon(p, tol);
    EXPECT_EQ(heal_polygon(once, tol), once) << "trial " << trial;
    EXPECT_TRUE(is_simple(once));
  }
}

TEST(HealCurves, KeepsRectangleCorners) {
  const Polygon r = rect_poly(0, 0, 10 * um, 2 * um);
  EXPECT_EQ(heal_polygon(r, 5 * um), r);
}

TEST(InferCpw, StraightLine) {
  const auto metal = straight_cpw(10 * um, 6 * um);
  const CpwSpec spec = infer_cpw(metal, {{20 * um, 0}, {380 * um, 0}});
  EXPECT_NEAR(spec.trace_width, 10 * um, 1e-12 * um);
  EXPECT_NEAR(spec.gap, 6 * um, 1e-12 * um);
}

TEST(InferCpw, ScalesWithGeometry) {
  const auto metal = transform(straight_cpw(10 * um, 6 * um), Affine2::scaling(2.0));
  const CpwSpec spec = infer_cpw(metal, {{40 * um, 0}, {760 * um, 0}});
  EXPECT_NEAR(spec.trace_width, 20 * um, 1e-12 * um);
  EXPECT_NEAR(spec.gap, 12 * um, 1e-12 * um);
}

TEST(InferCpw, HintInGroundFails) {
  const auto metal = straight_cpw(10 * um, 6 * um);
  EXPECT_THROW(infer_cpw(metal, {{20 * um, 50 * um}, {380 * um, 50 * um}}), LayoutError);
  EXPECT_THROW(infer_cpw(metal, {{20 * um, 8 * um}, {380 * um, 8 * um}}), LayoutError);
}

TEST(InferCpw, AsymmetricGapWarns) {
  const double h = 5 * um;
  const std::vector<Polygon> metal{rect_poly(0, -h, 400 * um, h), rect_poly(0, h + 6 * um, 400 * um, 200 * um),
                                   rect_poly(0, -200 * um, 400 * um, -h - 7 * um)};
  Warnings w;
  const CpwSpec spec = infer_cpw(metal, {{20 * um, 0}, {380 * um, 0}}, &w);
  EXPECT_NEAR(spec.gap, 6.5 * um, 1e-12 * um);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_NE(w[0].find("asymmetric"), std::string::npos);
}

TEST(InferCpw, RigidMotionInvariant) {
  const auto metal = straight_cpw(10 * um, 6 * um);
  const Polyline hint{{20 * um, 0}, {200 * um, 0}, {380 * um, 0}};
  const CpwSpec ref = infer_cpw(metal, hint);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(0.0, 360.0), off(-1e-3, 1e-3);
  for (int i = 0; i < 20; ++i) {
    const Affine2 xf = Affine2::translation({off(rng), off(rng)}) * Affine2::rotation_deg(ang(rng));
    const CpwSpec s = infer_cpw(transform(metal, xf), transform(hint, xf));
    EXPECT_NEAR(s.trace_width, ref.trace_width, 1e-9 * um);
    EXPECT_NEAR(s.gap, ref.gap, 1e-9 * um);
  }
}

TEST(InferCpw, BentTraceUsesMedian) {
  // L-shaped CPW; stations near the corner see odd sections but the median is robust.
  const double w = 10 * um, s = 6 * um;
  const double h = w / 2;
  std::vector<Polygon> metal{
      Polygon{{0, -h}, {300 * um + h, -h}, {300 * um + h, 300 * um}, {300 * um - h, 300 * um}, {300 * um - h, h}, {0, h}},
      Polygon{{0, h + s}, {300 * um - h - s, h + s}, {300 * um - h - s, 300 * um}, {0, 300 * um}},
      Polygon{{0, -h - s}, {0, -200 * um}, {600 * um, -200 * um}, {600 * um, 300 * um}, {300 * um + h + s, 300 * um},
              {300 * um + h + s, -h - s}},
  };
  const CpwSpec spec = infer_cpw(metal, {{0, 0}, {300 * um, 0}, {300 * um, 300 * um}});
  EXPECT_NEAR(spec.trace_width, w, 1e-12 * um);
  EXPECT_NEAR(spec.gap, s, 1e-12 * um);
}

namespace {

std::vector<gds::FlatPolygon> flat_cpw_chip() {
  std::vector<gds::FlatPolygon> flat;
  for (auto& p : straight_cpw(10 * um, 6 * um)) flat.push_back({1, 0, p});
  flat.push_back({99, 0, rect_poly(0, 0, 1 * um, 1 * um)});  // ignored layer
  return flat;
}

nlohmann::json cpw_annotations() {
  return nlohmann::json::parse(R"({
    "length_unit": "um",
    "metal_layers": [1],
    "chip_extent": [-50, -300, 450, 300],
    "ports": [
      {"name": "in", "rect": [0, 5, 2, 11], "excited": true},
      {"name": "out", "rect": [398, 5, 400, 11], "impedance": 50}
    ],
    "junctions": [{"name": "J1", "rect": [100, 5, 101, 11], "critical_current": 30e-9}],
    "terminals": [{"name": "trace", "point": [200, 0]}],
    "cpw": [{"name": "feed", "centerline": [[20, 0], [380, 0]]}]
  })");
}

}  // namespace

TEST(BuildLayout, FromAnnotations) {
  const Annotations ann = parse_annotations(cpw_annotations());
  const LayoutModel m = build_layout(flat_cpw_chip(), ann, 0.5 * um);
  ASSERT_EQ(m.metal_polygons.size(), 3u);
  ASSERT_EQ(m.ports.size(), 2u);
  EXPECT_TRUE(m.ports[0].excited);
  EXPECT_FALSE(m.ports[1].excited);
  EXPECT_EQ(m.ports[0].direction, Direction::plus_y);
  EXPECT_NEAR(m.ports[0].rect.min.y, 5 * um, 1e-18);
  ASSERT_EQ(m.junctions.size(), 1u);
  EXPECT_NEAR(m.junctions[0].inductance, junction_inductance(30e-9), 1e-20);
  EXPECT_EQ(m.junctions[0].direction, Direction::plus_y);
  ASSERT_EQ(m.terminals.size(), 1u);
  EXPECT_EQ(m.terminals[0].polygon, 0u);
  ASSERT_EQ(m.cpw_specs.size(), 1u);
  EXPECT_EQ(m.cpw_specs[0].name, "feed");
  EXPECT_NEAR(m.cpw_specs[0].trace_width, 10 * um, 1e-18);
  EXPECT_NEAR(m.chip_extent.max.x, 450 * um, 1e-15);
}

TEST(BuildLayout, PortInsideMetalRejected) {
  auto doc = cpw_annotations();
  doc["ports"][0]["rect"] = {10, -2, 12, 2};
  EXPECT_THROW(build_layout(flat_cpw_chip(), parse_annotations(doc), 0.5 * um), LayoutError);
}

TEST(BuildLayout, TerminalOutsideMetalRejected) {
  auto doc = cpw_annotations();
  doc["terminals"][0]["point"] = {200, 8};
  EXPECT_THROW(build_layout(flat_cpw_chip(), parse_annotations(doc), 0.5 * um), LayoutError);
}

TEST(BuildLayout, SiteLayerMapping) {
  auto doc = cpw_annotations();
  doc.erase("ports");
  doc["site_layers"] = {{"port", 50}};
  auto flat = flat_cpw_chip();
  flat.push_back({50, 0, rect_poly(0, 5 * um, 2 * um, 11 * um)});
  const LayoutModel m = build_layout(flat, parse_annotations(doc), 0.5 * um);
  ASSERT_EQ(m.ports.size(), 1u);
  EXPECT_EQ(m.ports[0].name, "L1");
  EXPECT_EQ(m.ports[0].impedance, 50.0);
}

TEST(Annotations, RejectsBadInput) {
  EXPECT_THROW(parse_annotations(nlohmann::json::parse(R"({"metal_layers": []})")), LayoutError);
  EXPECT_THROW(parse_annotations(nlohmann::json::parse(R"({"metal_layers": [1], "length_unit": "ft"})")),
               LayoutError);
  EXPECT_THROW(parse_annotations(nlohmann::json::parse(
                   R"({"metal_layers": [1], "ports": [{"name": "p", "rect": [0, 0, 1, 1], "impedance": 0}]})")),
               LayoutError);
  EXPECT_THROW(parse_annotations(nlohmann::json::parse(
                   R"({"metal_layers": [1], "junctions": [{"name": "j", "rect": [0, 0, 1, 1]}]})")),
               LayoutError);
  EXPECT_THROW(parse_annotations(nlohmann::json::parse(R"({"metal_layers": [1], "ports": [{"rect": [0]}]})")),
               LayoutError);
}
