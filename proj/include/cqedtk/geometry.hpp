#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace cqedtk {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Simple polygon as a vertex ring. The closing edge back to the first
/// vertex is implicit; the first vertex is never repeated at the end.
using Polygon = std::vector<Vec2>;

/// Open polyline.
using Polyline = std::vector<Vec2>;

/// Axis-aligned rectangle.
struct Rect {
  Vec2 min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Vec2 max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  static Rect from_corners(Vec2 a, Vec2 b) {
    return {{std::min(a.x, b.x), std::min(a.y, b.y)}, {std::max(a.x, b.x), std::max(a.y, b.y)}};
  }

  bool empty() const { return !(min.x <= max.x && min.y <= max.y); }
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  Vec2 center() const { return 0.5 * (min + max); }

  void expand(Vec2 p) {
    min = {std::min(min.x, p.x), std::min(min.y, p.y)};
    max = {std::max(max.x, p.x), std::max(max.y, p.y)};
  }
  void expand(const Rect& r) {
    if (r.empty()) return;
    expand(r.min);
    expand(r.max);
  }

  bool contains(Vec2 p, double tol = 0.0) const {
    return p.x >= min.x - tol && p.x <= max.x + tol && p.y >= min.y - tol && p.y <= max.y + tol;
  }
  bool contains(const Rect& r, double tol = 0.0) const {
    return contains(r.min, tol) && contains(r.max, tol);
  }

  /// True when the interiors overlap with positive area.
  bool overlaps(const Rect& r) const {
    return std::min(max.x, r.max.x) > std::max(min.x, r.min.x) &&
           std::min(max.y, r.max.y) > std::max(min.y, r.min.y);
  }

  /// Corners in counterclockwise order starting at min.
  std::array<Vec2, 4> corners() const {
    return {min, Vec2{max.x, min.y}, max, Vec2{min.x, max.y}};
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

inline Rect bounding_box(std::span<const Vec2> pts) {
  Rect r;
  for (Vec2 p : pts) r.expand(p);
  return r;
}

inline double signed_area(std::span<const Vec2> poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * a;
}

/// Even-odd point containment. Points exactly on an edge may go either way.
inline bool point_in_polygon(Vec2 p, std::span<const Vec2> poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

inline double distance_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

/// Distance from p to the infinite line through a and b.
inline double distance_to_line(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len = norm(ab);
  if (len == 0.0) return distance(p, a);
  return std::abs(cross(ab, p - a)) / len;
}

namespace detail {

inline int orientation(Vec2 a, Vec2 b, Vec2 c, double eps) {
  const double v = cross(b - a, c - a);
  if (v > eps) return 1;
  if (v < -eps) return -1;
  return 0;
}

inline bool on_segment(Vec2 a, Vec2 b, Vec2 p, double eps) {
  return p.x <= std::max(a.x, b.x) + eps && p.x >= std::min(a.x, b.x) - eps &&
         p.y <= std::max(a.y, b.y) + eps && p.y >= std::min(a.y, b.y) - eps;
}

}  // namespace detail

/// Closed-segment intersection test, including touching and collinear overlap.
inline bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2, double eps = 0.0) {
  const int o1 = detail::orientation(p1, p2, q1, eps);
  const int o2 = detail::orientation(p1, p2, q2, eps);
  const int o3 = detail::orientation(q1, q2, p1, eps);
  const int o4 = detail::orientation(q1, q2, p2, eps);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && detail::on_segment(p1, p2, q1, eps)) return true;
  if (o2 == 0 && detail::on_segment(p1, p2, q2, eps)) return true;
  if (o3 == 0 && detail::on_segment(q1, q2, p1, eps)) return true;
  if (o4 == 0 && detail::on_segment(q1, q2, p2, eps)) return true;
  return false;
}

/// O(n^2) simplicity check: no two non-adjacent edges touch.
inline bool is_simple(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  const Rect box = bounding_box(poly);
  const double scale = std::max(box.width(), box.height());
  const double eps = scale * scale * 1e-14;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      const Vec2 c = poly[j], d = poly[(j + 1) % n];
      if (segments_intersect(a, b, c, d, eps)) return false;
    }
  }
  return true;
}

/// 2D affine map x' = linear * x + offset, row-major 2x2 linear part.
struct Affine2 {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
  Vec2 offset{};

  Vec2 operator()(Vec2 p) const { return {a * p.x + b * p.y + offset.x, c * p.x + d * p.y + offset.y}; }

  /// Composition: (lhs * rhs)(p) == lhs(rhs(p)).
  friend Affine2 operator*(const Affine2& l, const Affine2& r) {
    Affine2 out;
    out.a = l.a * r.a + l.b * r.c;
    out.b = l.a * r.b + l.b * r.d;
    out.c = l.c * r.a + l.d * r.c;
    out.d = l.c * r.b + l.d * r.d;
    out.offset = l(r.offset);
    return out;
  }

  double determinant() const { return a * d - b * c; }

  static Affine2 translation(Vec2 t) { return {1.0, 0.0, 0.0, 1.0, t}; }
  static Affine2 scaling(double s) { return {s, 0.0, 0.0, s, {}}; }
  static Affine2 rotation_deg(double deg);
};

inline Affine2 Affine2::rotation_deg(double deg) {
  // Exact values for the quarter turns layouts overwhelmingly use.
  const double turns = deg / 90.0;
  if (turns == std::round(turns)) {
    const long q = ((static_cast<long>(std::round(turns)) % 4) + 4) % 4;
    constexpr double cs[4] = {1.0, 0.0, -1.0, 0.0};
    constexpr double sn[4] = {0.0, 1.0, 0.0, -1.0};
    return {cs[q], -sn[q], sn[q], cs[q], {}};
  }
  const double rad = deg * std::acos(-1.0) / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  return {c, -s, s, c, {}};
}

}  // namespace cqedtk
