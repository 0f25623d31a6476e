#pragma once

// Layouts of the bundled sample chips, as GDSII libraries plus their
// annotation documents. make_samples writes them to disk; the golden test
// checks the committed files still match.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "cqedtk/analytic.hpp"
#include "cqedtk/gdsii.hpp"

namespace cqedtk::samples {

struct SampleChip {
  std::string name;
  gds::Library library;
  nlohmann::ordered_json annotations;
};

namespace detail {

// database unit is 1 nm
inline std::int64_t nm(double um) { return std::llround(um * 1000.0); }

inline gds::Element box(double x0, double y0, double x1, double y1, int layer = 1) {
  return gds::Element::boundary(layer, 0, {{nm(x0), nm(y0)}, {nm(x1), nm(y0)}, {nm(x1), nm(y1)}, {nm(x0), nm(y1)}});
}

inline gds::Library library(std::string name) {
  gds::Library lib;
  lib.name = std::move(name);
  lib.user_unit_per_db_unit = 1e-3;
  lib.meters_per_db_unit = 1e-9;
  lib.timestamps = {2024, 1, 1, 0, 0, 0, 2024, 1, 1, 0, 0, 0};
  return lib;
}

inline gds::Structure structure(std::string name, std::vector<gds::Element> elements) {
  gds::Structure s;
  s.name = std::move(name);
  s.timestamps = {2024, 1, 1, 0, 0, 0, 2024, 1, 1, 0, 0, 0};
  s.elements = std::move(elements);
  return s;
}

}  // namespace detail

struct StubDesign {
  std::string name;
  double x_um;       // stub centre
  double f_design;   // Hz
  double length_um;  // from the quarter-wave estimate, snapped to the grid
};

inline constexpr double silicon_eps = 11.49;

/// Four shorted quarter-wave stubs hanging off one feedline. Stub lengths
/// follow f = c / (4 L sqrt(eps_eff)) with eps_eff = (eps_r + 1) / 2.
inline std::vector<StubDesign> four_resonator_stubs() {
  const double eps_eff = 0.5 * (silicon_eps + 1.0);
  const double f[] = {7.1787e9, 7.2684e9, 7.5484e9, 7.6447e9};
  std::vector<StubDesign> out;
  for (int i = 0; i < 4; ++i) {
    const double len = std::round(analytic::quarter_wave_length(f[i], eps_eff) * 1e6);
    out.push_back({fmt::format("R{}", i + 1), 1600.0 * (i + 1), f[i], len});
  }
  return out;
}

// Chip is 8 mm x 7 mm. Feed: W = 10 um, s = 6 um along y = 0. Each stub
// (W = 10 um) sits in a 22 um wide channel cut into the upper ground; its
// tip is 12 um above the feed trace and its far end joins the ground cap.
inline SampleChip four_resonators() {
  using detail::box;
  const double top = 5500.0, y_tip = 17.0;
  const auto stubs = four_resonator_stubs();
  auto lib = detail::library("FOUR_RES");

  lib.structures.push_back(detail::structure("FEED", {box(0, -5, 8000, 5), box(0, -1500, 8000, -11)}));
  for (const auto& s : stubs)
    lib.structures.push_back(detail::structure(
        "STUB_" + s.name, {box(-5, y_tip, 5, y_tip + s.length_um), box(-11, y_tip + s.length_um, 11, top)}));

  std::vector<gds::Element> chip;
  chip.push_back(gds::Element::sref("FEED", {0, 0}));
  double x = 0.0;
  for (const auto& s : stubs) {
    chip.push_back(box(x, 11, s.x_um - 11, top));
    chip.push_back(gds::Element::sref("STUB_" + s.name, {detail::nm(s.x_um), 0}));
    x = s.x_um + 11;
  }
  chip.push_back(box(x, 11, 8000, top));
  lib.structures.push_back(detail::structure("CHIP", std::move(chip)));

  nlohmann::ordered_json cpw = nlohmann::ordered_json::array();
  cpw.push_back({{"name", "feed"}, {"centerline", {{100, 0}, {7900, 0}}}});
  for (const auto& s : stubs)
    cpw.push_back({{"name", s.name}, {"centerline", {{s.x_um, y_tip}, {s.x_um, y_tip + s.length_um}}}});
  nlohmann::ordered_json ann = {
      {"length_unit", "um"},
      {"metal_layers", {1}},
      {"chip_extent", {0, -1500, 8000, top}},
      {"ports",
       {{{"name", "1"}, {"rect", {0, 5, 2, 11}}, {"excited", true}},
        {{"name", "2"}, {"rect", {7998, 5, 8000, 11}}}}},
      {"cpw", cpw},
  };
  return {"four_resonators", std::move(lib), std::move(ann)};
}

/// Floating two-pad transmon beside a feedline, one junction across the
/// 40 um pad gap.
inline SampleChip transmon() {
  using detail::box;
  auto lib = detail::library("TRANSMON");
  lib.structures.push_back(detail::structure("QUBIT", {box(0, 0, 130, 200), box(170, 0, 300, 200)}));
  lib.structures.push_back(detail::structure(
      "CHIP", {box(0, -5, 1000, 5), box(0, -500, 1000, -11), box(0, 11, 1000, 100), box(0, 100, 300, 500),
               box(700, 100, 1000, 500), box(300, 400, 700, 500), gds::Element::sref("QUBIT", {350000, 150000})}));
  nlohmann::ordered_json ann = {
      {"length_unit", "um"},
      {"metal_layers", {1}},
      {"chip_extent", {0, -500, 1000, 500}},
      {"ports",
       {{{"name", "1"}, {"rect", {0, 5, 2, 11}}, {"excited", true}},
        {{"name", "2"}, {"rect", {998, 5, 1000, 11}}}}},
      {"junctions", {{{"name", "J1"}, {"rect", {480, 245, 520, 255}}, {"critical_current", 30e-9}}}},
      {"terminals", {{{"name", "A"}, {"point", {400, 250}}}, {{"name", "B"}, {"point", {600, 250}}}}},
      {"cpw", {{{"name", "feed"}, {"centerline", {{50, 0}, {950, 0}}}}}},
  };
  return {"transmon", std::move(lib), std::move(ann)};
}

inline std::vector<SampleChip> all() { return {four_resonators(), transmon()}; }

}  // namespace cqedtk::samples
