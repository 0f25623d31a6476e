#pragma once

// GDSII stream format: record framing, excess-64 reals, hierarchical
// library model and flattening to polygons in metres.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"

namespace cqedtk::gds {

/// Parse/write failure. `offset` is the byte offset of the offending record,
/// or npos when the failure is not tied to a position in a stream.
class GdsError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit GdsError(const std::string& what, std::size_t offset = npos)
      : Error(offset == npos ? what : what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

namespace record {
inline constexpr std::uint8_t HEADER = 0x00;
inline constexpr std::uint8_t BGNLIB = 0x01;
inline constexpr std::uint8_t LIBNAME = 0x02;
inline constexpr std::uint8_t UNITS = 0x03;
inline constexpr std::uint8_t ENDLIB = 0x04;
inline constexpr std::uint8_t BGNSTR = 0x05;
inline constexpr std::uint8_t STRNAME = 0x06;
inline constexpr std::uint8_t ENDSTR = 0x07;
inline constexpr std::uint8_t BOUNDARY = 0x08;
inline constexpr std::uint8_t PATH = 0x09;
inline constexpr std::uint8_t SREF = 0x0A;
inline constexpr std::uint8_t AREF = 0x0B;
inline constexpr std::uint8_t TEXT = 0x0C;
inline constexpr std::uint8_t LAYER = 0x0D;
inline constexpr std::uint8_t DATATYPE = 0x0E;
inline constexpr std::uint8_t WIDTH = 0x0F;
inline constexpr std::uint8_t XY = 0x10;
inline constexpr std::uint8_t ENDEL = 0x11;
inline constexpr std::uint8_t SNAME = 0x12;
inline constexpr std::uint8_t COLROW = 0x13;
inline constexpr std::uint8_t NODE = 0x15;
inline constexpr std::uint8_t STRANS = 0x1A;
inline constexpr std::uint8_t MAG = 0x1B;
inline constexpr std::uint8_t ANGLE = 0x1C;
inline constexpr std::uint8_t PATHTYPE = 0x21;
inline constexpr std::uint8_t BOX = 0x2D;
}  // namespace record

namespace data_type {
inline constexpr std::uint8_t none = 0;
inline constexpr std::uint8_t bit_array = 1;
inline constexpr std::uint8_t int16 = 2;
inline constexpr std::uint8_t int32 = 3;
inline constexpr std::uint8_t real4 = 4;
inline constexpr std::uint8_t real8 = 5;
inline constexpr std::uint8_t ascii = 6;
}  // namespace data_type

inline constexpr std::size_t max_name_length = 32;
inline constexpr std::size_t max_xy_points = (65535 - 4) / 8;

// ---------------------------------------------------------------------------
// Excess-64 8-byte reals
// ---------------------------------------------------------------------------

using Real8Bytes = std::array<std::uint8_t, 8>;

/// (-1)^sign * mantissa * 16^(exponent - 64), mantissa a 56-bit fraction.
inline double decode_real8(std::span<const std::uint8_t, 8> b) {
  std::uint64_t mantissa = 0;
  for (int i = 1; i < 8; ++i) mantissa = (mantissa << 8) | b[i];
  const int exponent = b[0] & 0x7F;
  const double value = std::ldexp(static_cast<double>(mantissa), 4 * (exponent - 64) - 56);
  return (b[0] & 0x80) ? -value : value;
}

/// A nonzero exponent with a zero mantissa is an unnormalized zero.
inline bool is_unnormalized_zero(std::span<const std::uint8_t, 8> b) {
  bool zero_mantissa = true;
  for (int i = 1; i < 8; ++i) zero_mantissa = zero_mantissa && b[i] == 0;
  return zero_mantissa && (b[0] & 0x7F) != 0;
}

/// Normalizes the mantissa to [1/16, 1). Any normal double inside the
/// representable range round-trips exactly since 56 >= 53 + 3 bits.
/// Magnitudes below 16^-65 flush to zero.
inline Real8Bytes encode_real8(double x) {
  Real8Bytes out{};
  if (x == 0.0) return out;
  if (!std::isfinite(x)) throw GdsError("cannot encode non-finite real");
  const bool negative = std::signbit(x);
  const double a = std::abs(x);
  int e2 = 0;
  std::frexp(a, &e2);
  const int e16 = e2 > 0 ? (e2 + 3) / 4 : -((-e2) / 4);
  const int biased = e16 + 64;
  if (biased > 127) throw GdsError("real overflows excess-64 range: |x| >= 16^63");
  if (biased < 0) return out;
  // a * 2^(56 - 4 e16) lies in [2^52, 2^56) and is therefore an integer.
  auto mantissa = static_cast<std::uint64_t>(std::ldexp(a, 56 - 4 * e16));
  out[0] = static_cast<std::uint8_t>((negative ? 0x80 : 0x00) | biased);
  for (int i = 7; i >= 1; --i) {
    out[i] = static_cast<std::uint8_t>(mantissa & 0xFF);
    mantissa >>= 8;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Library model
// ---------------------------------------------------------------------------

/// Coordinate in database units. Stored wide so that out-of-range values are
/// representable and rejected by the writer rather than silently wrapped.
struct Point {
  std::int64_t x = 0;
  std::int64_t y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class ElementKind { boundary, path, structure_ref, array_ref };

struct Element {
  ElementKind kind = ElementKind::boundary;
  int layer = 0;
  int datatype = 0;
  /// Boundary: closed ring. Path: centerline. SREF: origin.
  /// AREF: origin, origin + columns * column_step, origin + rows * row_step.
  std::vector<Point> xy;
  std::int32_t path_width = 0;  // negative means absolute width
  int path_type = 0;
  std::string ref_name;
  bool reflect_x = false;
  bool absolute_magnification = false;
  bool absolute_angle = false;
  double magnification = 1.0;
  double rotation_deg = 0.0;
  int columns = 1;
  int rows = 1;

  bool is_reference() const {
    return kind == ElementKind::structure_ref || kind == ElementKind::array_ref;
  }
  Vec2 origin() const { return {double(xy.at(0).x), double(xy.at(0).y)}; }
  Vec2 column_step() const {
    return {double(xy.at(1).x - xy.at(0).x) / columns, double(xy.at(1).y - xy.at(0).y) / columns};
  }
  Vec2 row_step() const {
    return {double(xy.at(2).x - xy.at(0).x) / rows, double(xy.at(2).y - xy.at(0).y) / rows};
  }

  /// Closes the ring if the last point differs from the first.
  static Element boundary(int layer, int datatype, std::vector<Point> ring) {
    if (!ring.empty() && ring.front() != ring.back()) ring.push_back(ring.front());
    Element e;
    e.kind = ElementKind::boundary;
    e.layer = layer;
    e.datatype = datatype;
    e.xy = std::move(ring);
    return e;
  }
  static Element path(int layer, int datatype, std::vector<Point> centerline, std::int32_t width,
                      int path_type = 0) {
    Element e;
    e.kind = ElementKind::path;
    e.layer = layer;
    e.datatype = datatype;
    e.xy = std::move(centerline);
    e.path_width = width;
    e.path_type = path_type;
    return e;
  }
  static Element sref(std::string name, Point origin, double rotation_deg = 0.0,
                      double magnification = 1.0, bool reflect_x = false) {
    Element e;
    e.kind = ElementKind::structure_ref;
    e.ref_name = std::move(name);
    e.xy = {origin};
    e.rotation_deg = rotation_deg;
    e.magnification = magnification;
    e.reflect_x = reflect_x;
    return e;
  }
  static Element aref(std::string name, Point origin, int columns, int rows, Point column_step,
                      Point row_step) {
    Element e;
    e.kind = ElementKind::array_ref;
    e.ref_name = std::move(name);
    e.columns = columns;
    e.rows = rows;
    e.xy = {origin,
            {origin.x + columns * column_step.x, origin.y + columns * column_step.y},
            {origin.x + rows * row_step.x, origin.y + rows * row_step.y}};
    return e;
  }

  friend bool operator==(const Element&, const Element&) = default;
};

using Timestamps = std::array<std::int16_t, 12>;

struct Structure {
  std::string name;
  Timestamps timestamps{};
  std::vector<Element> elements;
  friend bool operator==(const Structure&, const Structure&) = default;
};

struct Library {
  std::string name;
  int version = 600;
  Timestamps timestamps{};
  double user_unit_per_db_unit = 1e-3;
  double meters_per_db_unit = 1e-9;
  std::vector<Structure> structures;

  const Structure* find(std::string_view structure_name) const {
    for (const auto& s : structures)
      if (s.name == structure_name) return &s;
    return nullptr;
  }

  friend bool operator==(const Library&, const Library&) = default;
};

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint16_t be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
inline std::int16_t be_i16(const std::uint8_t* p) { return static_cast<std::int16_t>(be16(p)); }
inline std::int32_t be_i32(const std::uint8_t* p) {
  return static_cast<std::int32_t>((std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
                                   (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]));
}

inline const char* record_name(std::uint8_t type) {
  switch (type) {
    case record::HEADER: return "HEADER";
    case record::BGNLIB: return "BGNLIB";
    case record::LIBNAME: return "LIBNAME";
    case record::UNITS: return "UNITS";
    case record::ENDLIB: return "ENDLIB";
    case record::BGNSTR: return "BGNSTR";
    case record::STRNAME: return "STRNAME";
    case record::ENDSTR: return "ENDSTR";
    case record::BOUNDARY: return "BOUNDARY";
    case record::PATH: return "PATH";
    case record::SREF: return "SREF";
    case record::AREF: return "AREF";
    case record::TEXT: return "TEXT";
    case record::LAYER: return "LAYER";
    case record::DATATYPE: return "DATATYPE";
    case record::WIDTH: return "WIDTH";
    case record::XY: return "XY";
    case record::ENDEL: return "ENDEL";
    case record::SNAME: return "SNAME";
    case record::COLROW: return "COLROW";
    case record::NODE: return "NODE";
    case record::STRANS: return "STRANS";
    case record::MAG: return "MAG";
    case record::ANGLE: return "ANGLE";
    case record::PATHTYPE: return "PATHTYPE";
    case record::BOX: return "BOX";
    default: return "record";
  }
}

struct RawRecord {
  std::uint8_t type = 0;
  std::uint8_t dtype = 0;
  std::span<const std::uint8_t> data;
  std::size_t offset = 0;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> stream, Warnings* warnings)
      : stream_(stream), warnings_(warnings) {}

  Library parse() {
    Library lib;
    RawRecord r = next_required("HEADER");
    if (r.type != record::HEADER)
      throw GdsError("stream does not begin with a HEADER record", r.offset);
    lib.version = int16_at(r, 0);

    r = next_required("BGNLIB");
    expect(r, record::BGNLIB);
    lib.timestamps = timestamps(r);

    r = next_required("LIBNAME");
    expect(r, record::LIBNAME);
    lib.name = ascii(r);

    bool have_units = false;
    for (;;) {
      r = next_required("ENDLIB");
      if (r.type == record::UNITS) {
        check_dtype(r, data_type::real8, 16);
        lib.user_unit_per_db_unit = real8_at(r, 0);
        lib.meters_per_db_unit = real8_at(r, 8);
        if (!(lib.user_unit_per_db_unit > 0.0) || !(lib.meters_per_db_unit > 0.0))
          throw GdsError("UNITS must be positive", r.offset);
        have_units = true;
      } else if (r.type == record::BGNSTR) {
        if (!have_units) throw GdsError("BGNSTR before UNITS", r.offset);
        lib.structures.push_back(parse_structure(r));
        if (std::count_if(lib.structures.begin(), lib.structures.end(), [&](const Structure& s) {
              return s.name == lib.structures.back().name;
            }) > 1)
          throw GdsError("duplicate structure name '" + lib.structures.back().name + "'", r.offset);
      } else if (r.type == record::ENDLIB) {
        if (!have_units) throw GdsError("library has no UNITS record", r.offset);
        break;
      } else if (is_element_record(r.type) || r.type == record::ENDSTR ||
                 r.type == record::STRNAME) {
        throw GdsError(std::string(record_name(r.type)) + " outside of a structure", r.offset);
      } else {
        skip(r);
      }
    }
    for (std::size_t i = pos_; i < stream_.size(); ++i)
      if (stream_[i] != 0) throw GdsError("unexpected data after ENDLIB", pos_);
    flush_skipped();
    return lib;
  }

 private:
  static bool is_element_record(std::uint8_t t) {
    switch (t) {
      case record::BOUNDARY: case record::PATH: case record::SREF: case record::AREF:
      case record::TEXT: case record::NODE: case record::BOX: case record::LAYER:
      case record::DATATYPE: case record::WIDTH: case record::XY: case record::ENDEL:
      case record::SNAME: case record::COLROW: case record::STRANS: case record::MAG:
      case record::ANGLE: case record::PATHTYPE:
        return true;
      default:
        return false;
    }
  }

  std::optional<RawRecord> next() {
    if (pos_ >= stream_.size()) return std::nullopt;
    if (stream_.size() - pos_ < 4)
      throw GdsError("truncated record header", pos_);
    const std::uint8_t* p = stream_.data() + pos_;
    const std::uint16_t len = be16(p);
    if (len < 4) throw GdsError("record length " + std::to_string(len) + " smaller than 4", pos_);
    if (len % 2 != 0) throw GdsError("odd record length " + std::to_string(len), pos_);
    if (pos_ + len > stream_.size())
      throw GdsError("truncated record: declared " + std::to_string(len) + " bytes, " +
                         std::to_string(stream_.size() - pos_) + " available",
                     pos_);
    RawRecord r{p[2], p[3], stream_.subspan(pos_ + 4, len - 4), pos_};
    pos_ += len;
    return r;
  }

  RawRecord next_required(const char* expecting) {
    auto r = next();
    if (!r) throw GdsError(std::string("truncated stream: expected ") + expecting, pos_);
    return *r;
  }

  RawRecord next_in_structure(const std::string& name) {
    auto r = next();
    if (!r) throw GdsError("unclosed structure '" + name + "': missing ENDSTR", pos_);
    return *r;
  }

  static void expect(const RawRecord& r, std::uint8_t type) {
    if (r.type != type)
      throw GdsError(std::string("expected ") + record_name(type) + ", found " +
                         record_name(r.type),
                     r.offset);
  }

  static void check_dtype(const RawRecord& r, std::uint8_t dtype, std::size_t min_size) {
    if (r.dtype != dtype)
      throw GdsError(std::string(record_name(r.type)) + " has data type " +
                         std::to_string(r.dtype) + ", expected " + std::to_string(dtype),
                     r.offset);
    if (r.data.size() < min_size)
      throw GdsError(std::string(record_name(r.type)) + " payload too short", r.offset);
  }

  static int int16_at(const RawRecord& r, std::size_t i) {
    check_dtype(r, data_type::int16, 2 * (i + 1));
    return be_i16(r.data.data() + 2 * i);
  }

  double real8_at(const RawRecord& r, std::size_t byte_offset) {
    std::span<const std::uint8_t, 8> bytes(r.data.data() + byte_offset, 8);
    if (is_unnormalized_zero(bytes))
      warn(warnings_, "unnormalized zero real in " + std::string(record_name(r.type)) +
                          " at byte offset " + std::to_string(r.offset));
    return decode_real8(bytes);
  }

  static Timestamps timestamps(const RawRecord& r) {
    check_dtype(r, data_type::int16, 24);
    Timestamps t{};
    for (std::size_t i = 0; i < 12; ++i) t[i] = be_i16(r.data.data() + 2 * i);
    return t;
  }

  static std::string ascii(const RawRecord& r) {
    check_dtype(r, data_type::ascii, 0);
    std::string s(reinterpret_cast<const char*>(r.data.data()), r.data.size());
    while (!s.empty() && s.back() == '\0') s.pop_back();
    return s;
  }

  void skip(const RawRecord& r) { ++skipped_[r.type]; }

  void flush_skipped() {
    for (const auto& [type, count] : skipped_)
      warn(warnings_, "skipped " + std::to_string(count) + " unsupported record(s) of type 0x" +
                          hex(type));
  }

  static std::string hex(std::uint8_t v) {
    constexpr char digits[] = "0123456789ABCDEF";
    return {digits[v >> 4], digits[v & 0xF]};
  }

  Structure parse_structure(const RawRecord& begin) {
    Structure s;
    s.timestamps = timestamps(begin);
    RawRecord r = next_in_structure("");
    expect(r, record::STRNAME);
    s.name = ascii(r);
    for (;;) {
      r = next_in_structure(s.name);
      switch (r.type) {
        case record::ENDSTR:
          return s;
        case record::BOUNDARY:
        case record::PATH:
        case record::SREF:
        case record::AREF:
          s.elements.push_back(parse_element(r, s.name));
          break;
        case record::TEXT:
        case record::NODE:
        case record::BOX:
          skip_element(r, s.name);
          break;
        case record::BGNSTR:
        case record::ENDLIB:
          throw GdsError("unclosed structure '" + s.name + "': missing ENDSTR before " +
                             record_name(r.type),
                         r.offset);
        default:
          if (is_element_record(r.type))
            throw GdsError(std::string(record_name(r.type)) + " outside of an element", r.offset);
          skip(r);
      }
    }
  }

  void skip_element(const RawRecord& begin, const std::string& structure) {
    ++ignored_elements_;
    for (;;) {
      RawRecord r = next_in_structure(structure);
      if (r.type == record::ENDEL) break;
      if (r.type == record::ENDSTR || r.type == record::BGNSTR || r.type == record::ENDLIB)
        throw GdsError(std::string(record_name(begin.type)) + " element missing ENDEL", r.offset);
    }
    if (ignored_elements_ == 1)
      warn(warnings_, "ignoring TEXT/NODE/BOX elements (first at byte offset " +
                          std::to_string(begin.offset) + ")");
  }

  Element parse_element(const RawRecord& begin, const std::string& structure) {
    Element e;
    switch (begin.type) {
      case record::BOUNDARY: e.kind = ElementKind::boundary; break;
      case record::PATH: e.kind = ElementKind::path; break;
      case record::SREF: e.kind = ElementKind::structure_ref; break;
      default: e.kind = ElementKind::array_ref; break;
    }
    const bool geometric = !e.is_reference();
    bool have_layer = false, have_xy = false, have_sname = false, have_colrow = false;
    for (;;) {
      RawRecord r = next_in_structure(structure);
      const auto misplaced = [&] {
        throw GdsError(std::string(record_name(r.type)) + " not valid in " +
                           record_name(begin.type) + " element",
                       r.offset);
      };
      switch (r.type) {
        case record::ENDEL:
          if (!have_xy) throw GdsError("element without XY record", r.offset);
          if (geometric && !have_layer) throw GdsError("element without LAYER record", r.offset);
          if (!geometric && !have_sname) throw GdsError("reference without SNAME", r.offset);
          if (e.kind == ElementKind::array_ref && !have_colrow)
            throw GdsError("AREF without COLROW", r.offset);
          validate_element(e, begin.offset);
          return e;
        case record::LAYER:
          if (!geometric) misplaced();
          e.layer = int16_at(r, 0);
          have_layer = true;
          break;
        case record::DATATYPE:
          if (!geometric) misplaced();
          e.datatype = int16_at(r, 0);
          break;
        case record::WIDTH:
          if (e.kind != ElementKind::path) misplaced();
          check_dtype(r, data_type::int32, 4);
          e.path_width = be_i32(r.data.data());
          break;
        case record::PATHTYPE:
          if (e.kind != ElementKind::path) misplaced();
          e.path_type = int16_at(r, 0);
          break;
        case record::XY: {
          check_dtype(r, data_type::int32, 8);
          if (r.data.size() % 8 != 0) throw GdsError("XY payload not a multiple of 8", r.offset);
          e.xy.clear();
          for (std::size_t i = 0; i < r.data.size(); i += 8)
            e.xy.push_back({be_i32(r.data.data() + i), be_i32(r.data.data() + i + 4)});
          have_xy = true;
          break;
        }
        case record::SNAME:
          if (geometric) misplaced();
          e.ref_name = ascii(r);
          have_sname = true;
          break;
        case record::COLROW:
          if (e.kind != ElementKind::array_ref) misplaced();
          e.columns = int16_at(r, 0);
          e.rows = int16_at(r, 1);
          have_colrow = true;
          break;
        case record::STRANS: {
          if (geometric) misplaced();
          check_dtype(r, data_type::bit_array, 2);
          const std::uint16_t bits = be16(r.data.data());
          e.reflect_x = bits & 0x8000;
          e.absolute_magnification = bits & 0x0004;
          e.absolute_angle = bits & 0x0002;
          break;
        }
        case record::MAG:
          if (geometric) misplaced();
          check_dtype(r, data_type::real8, 8);
          e.magnification = real8_at(r, 0);
          break;
        case record::ANGLE:
          if (geometric) misplaced();
          check_dtype(r, data_type::real8, 8);
          e.rotation_deg = real8_at(r, 0);
          break;
        case record::BOUNDARY: case record::PATH: case record::SREF: case record::AREF:
        case record::TEXT: case record::NODE: case record::BOX: case record::ENDSTR:
        case record::BGNSTR: case record::ENDLIB:
          throw GdsError(std::string(record_name(begin.type)) + " element missing ENDEL before " +
                             record_name(r.type),
                         r.offset);
        default:
          skip(r);
      }
    }
  }

  static void validate_element(const Element& e, std::size_t offset) {
    switch (e.kind) {
      case ElementKind::boundary:
        if (e.xy.size() < 4) throw GdsError("boundary with fewer than 4 points", offset);
        if (e.xy.front() != e.xy.back()) throw GdsError("boundary not closed", offset);
        break;
      case ElementKind::path:
        if (e.xy.size() < 2) throw GdsError("path with fewer than 2 points", offset);
        break;
      case ElementKind::structure_ref:
        if (e.xy.size() != 1) throw GdsError("SREF must have exactly 1 point", offset);
        break;
      case ElementKind::array_ref:
        if (e.xy.size() != 3) throw GdsError("AREF must have exactly 3 points", offset);
        if (e.columns < 1 || e.rows < 1) throw GdsError("AREF with zero columns or rows", offset);
        break;
    }
  }

  std::span<const std::uint8_t> stream_;
  Warnings* warnings_;
  std::size_t pos_ = 0;
  std::map<std::uint8_t, std::size_t> skipped_;
  std::size_t ignored_elements_ = 0;
};

}  // namespace detail

inline Library parse_gds(std::span<const std::uint8_t> stream, Warnings* warnings = nullptr) {
  return detail::Reader(stream, warnings).parse();
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

namespace detail {

class Writer {
 public:
  std::vector<std::uint8_t> write(const Library& lib) {
    if (!(lib.user_unit_per_db_unit > 0.0) || !(lib.meters_per_db_unit > 0.0))
      throw GdsError("library units must be positive");
    begin(record::HEADER, data_type::int16);
    i16(lib.version);
    end();
    stamps(record::BGNLIB, lib.timestamps);
    text(record::LIBNAME, lib.name, false);
    begin(record::UNITS, data_type::real8);
    real(lib.user_unit_per_db_unit);
    real(lib.meters_per_db_unit);
    end();
    std::set<std::string_view> names;
    for (const auto& s : lib.structures) {
      if (!names.insert(s.name).second)
        throw GdsError("duplicate structure name '" + s.name + "'");
      stamps(record::BGNSTR, s.timestamps);
      text(record::STRNAME, s.name, true);
      for (const auto& e : s.elements) element(e);
      empty(record::ENDSTR);
    }
    empty(record::ENDLIB);
    return std::move(out_);
  }

 private:
  void begin(std::uint8_t type, std::uint8_t dtype) {
    start_ = out_.size();
    out_.insert(out_.end(), {0, 0, type, dtype});
  }
  void end() {
    const std::size_t len = out_.size() - start_;
    if (len > 65534) throw GdsError("record exceeds 65534 bytes");
    out_[start_] = static_cast<std::uint8_t>(len >> 8);
    out_[start_ + 1] = static_cast<std::uint8_t>(len & 0xFF);
  }
  void empty(std::uint8_t type) {
    begin(type, data_type::none);
    end();
  }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  void i16(long v) {
    if (v < std::numeric_limits<std::int16_t>::min() || v > std::numeric_limits<std::int16_t>::max())
      throw GdsError("value " + std::to_string(v) + " outside signed 16-bit range");
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  void i32(std::int64_t v) {
    if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max())
      throw GdsError("coordinate " + std::to_string(v) + " outside signed 32-bit range");
    const auto u = static_cast<std::uint32_t>(static_cast<std::int32_t>(v));
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(u >> shift));
  }
  void real(double v) {
    const auto b = encode_real8(v);
    out_.insert(out_.end(), b.begin(), b.end());
  }
  void stamps(std::uint8_t type, const Timestamps& t) {
    begin(type, data_type::int16);
    for (auto v : t) i16(v);
    end();
  }
  void text(std::uint8_t type, const std::string& s, bool required) {
    if (s.size() > max_name_length)
      throw GdsError("name '" + s + "' longer than " + std::to_string(max_name_length) +
                     " characters");
    if (required && s.empty()) throw GdsError("empty structure name");
    begin(type, data_type::ascii);
    out_.insert(out_.end(), s.begin(), s.end());
    if (s.size() % 2) out_.push_back(0);
    end();
  }
  void xy(const std::vector<Point>& pts) {
    if (pts.size() > max_xy_points)
      throw GdsError("element has " + std::to_string(pts.size()) + " points, XY record holds " +
                     std::to_string(max_xy_points));
    begin(record::XY, data_type::int32);
    for (const auto& p : pts) {
      i32(p.x);
      i32(p.y);
    }
    end();
  }
  void element(const Element& e) {
    switch (e.kind) {
      case ElementKind::boundary:
        if (e.xy.size() < 4 || e.xy.front() != e.xy.back())
          throw GdsError("boundary must be a closed ring of at least 4 points");
        empty(record::BOUNDARY);
        break;
      case ElementKind::path:
        if (e.xy.size() < 2) throw GdsError("path needs at least 2 points");
        empty(record::PATH);
        break;
      case ElementKind::structure_ref:
        if (e.xy.size() != 1) throw GdsError("SREF needs exactly 1 point");
        empty(record::SREF);
        break;
      case ElementKind::array_ref:
        if (e.xy.size() != 3 || e.columns < 1 || e.rows < 1)
          throw GdsError("AREF needs 3 points and columns, rows >= 1");
        empty(record::AREF);
        break;
    }
    if (e.is_reference()) {
      text(record::SNAME, e.ref_name, true);
      if (e.reflect_x || e.absolute_magnification || e.absolute_angle || e.magnification != 1.0 ||
          e.rotation_deg != 0.0) {
        begin(record::STRANS, data_type::bit_array);
        u16(static_cast<std::uint16_t>((e.reflect_x ? 0x8000 : 0) |
                                       (e.absolute_magnification ? 0x0004 : 0) |
                                       (e.absolute_angle ? 0x0002 : 0)));
        end();
        if (e.magnification != 1.0) {
          begin(record::MAG, data_type::real8);
          real(e.magnification);
          end();
        }
        if (e.rotation_deg != 0.0) {
          begin(record::ANGLE, data_type::real8);
          real(e.rotation_deg);
          end();
        }
      }
      if (e.kind == ElementKind::array_ref) {
        begin(record::COLROW, data_type::int16);
        i16(e.columns);
        i16(e.rows);
        end();
      }
    } else {
      begin(record::LAYER, data_type::int16);
      i16(e.layer);
      end();
      begin(record::DATATYPE, data_type::int16);
      i16(e.datatype);
      end();
      if (e.kind == ElementKind::path) {
        begin(record::PATHTYPE, data_type::int16);
        i16(e.path_type);
        end();
        begin(record::WIDTH, data_type::int32);
        i32(e.path_width);
        end();
      }
    }
    xy(e.xy);
    empty(record::ENDEL);
  }

  std::vector<std::uint8_t> out_;
  std::size_t start_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> write_gds(const Library& lib) { return detail::Writer().write(lib); }

// ---------------------------------------------------------------------------
// Flattening
// ---------------------------------------------------------------------------

struct FlatPolygon {
  int layer = 0;
  int datatype = 0;
  Polygon points;  // metres, implicit closure
};

/// Outline of a path centerline as a polygon in the same coordinates.
/// Flat ends for pathtype 0, half-width extensions for pathtype 2, miter joins.
inline Polygon path_outline(std::span<const Vec2> centerline, double width, int path_type) {
  std::vector<Vec2> pts;
  for (Vec2 p : centerline)
    if (pts.empty() || !(p == pts.back())) pts.push_back(p);
  const double hw = 0.5 * std::abs(width);
  if (pts.size() < 2 || hw == 0.0) return {};
  if (path_type == 2) {
    const Vec2 d0 = pts[1] - pts[0];
    pts.front() = pts.front() - (hw / norm(d0)) * d0;
    const std::size_t n = pts.size();
    const Vec2 d1 = pts[n - 1] - pts[n - 2];
    pts.back() = pts.back() + (hw / norm(d1)) * d1;
  }
  const auto left_normal = [&](std::size_t i) {
    const Vec2 d = pts[i + 1] - pts[i];
    const double l = norm(d);
    return Vec2{-d.y / l, d.x / l};
  };
  std::vector<Vec2> left, right;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0 || i == n - 1) {
      const Vec2 nrm = left_normal(i == 0 ? 0 : n - 2);
      left.push_back(pts[i] + hw * nrm);
      right.push_back(pts[i] - hw * nrm);
      continue;
    }
    const Vec2 n1 = left_normal(i - 1), n2 = left_normal(i);
    const Vec2 sum = n1 + n2;
    const double sl = norm(sum);
    if (sl < 1e-9) {
      // Full reversal: bevel.
      left.push_back(pts[i] + hw * n1);
      left.push_back(pts[i] + hw * n2);
      right.push_back(pts[i] - hw * n1);
      right.push_back(pts[i] - hw * n2);
      continue;
    }
    const Vec2 m = (1.0 / sl) * sum;
    const double len = hw / dot(m, n1);
    left.push_back(pts[i] + len * m);
    right.push_back(pts[i] - len * m);
  }
  Polygon out = left;
  out.insert(out.end(), right.rbegin(), right.rend());
  return out;
}

namespace detail {

class Flattener {
 public:
  Flattener(const Library& lib, Warnings* warnings) : lib_(lib), warnings_(warnings) {
    for (std::size_t i = 0; i < lib.structures.size(); ++i) index_[lib.structures[i].name] = i;
  }

  std::vector<FlatPolygon> run(std::string_view top) {
    const auto it = index_.find(std::string(top));
    if (it == index_.end()) throw GdsError("top structure '" + std::string(top) + "' not found");
    visit(it->second, Affine2::scaling(lib_.meters_per_db_unit), 1.0);
    return std::move(out_);
  }

 private:
  static Affine2 reference_transform(const Element& e, double mag) {
    Affine2 t = Affine2::scaling(mag);
    if (e.reflect_x) t = Affine2{1.0, 0.0, 0.0, -1.0, {}} * t;
    t = Affine2::rotation_deg(e.rotation_deg) * t;
    return t;
  }

  void visit(std::size_t idx, const Affine2& xf, double scale) {
    const Structure& s = lib_.structures[idx];
    if (!on_stack_.insert(idx).second)
      throw GdsError("reference cycle through structure '" + s.name + "'");
    for (const Element& e : s.elements) {
      switch (e.kind) {
        case ElementKind::boundary: {
          Polygon poly;
          poly.reserve(e.xy.size() - 1);
          for (std::size_t i = 0; i + 1 < e.xy.size(); ++i)
            poly.push_back(xf({double(e.xy[i].x), double(e.xy[i].y)}));
          emit(e, std::move(poly));
          break;
        }
        case ElementKind::path: {
          std::vector<Vec2> line;
          for (const auto& p : e.xy) line.push_back({double(p.x), double(p.y)});
          if (e.path_type != 0 && e.path_type != 2 && !warned_pathtype_) {
            warn(warnings_, "pathtype " + std::to_string(e.path_type) +
                                " treated as flat-ended (pathtype 0)");
            warned_pathtype_ = true;
          }
          const double width = e.path_width < 0 ? -e.path_width / scale : e.path_width;
          Polygon local = path_outline(line, width, e.path_type == 2 ? 2 : 0);
          if (local.empty()) {
            warn(warnings_, "zero-width or degenerate path in '" + s.name + "' skipped");
            break;
          }
          for (auto& p : local) p = xf(p);
          emit(e, std::move(local));
          break;
        }
        case ElementKind::structure_ref:
        case ElementKind::array_ref: {
          const auto it = index_.find(e.ref_name);
          if (it == index_.end())
            throw GdsError("dangling reference to '" + e.ref_name + "' in '" + s.name + "'");
          if ((e.absolute_magnification || e.absolute_angle) && !warned_absolute_) {
            warn(warnings_, "absolute magnification/angle flags treated as relative");
            warned_absolute_ = true;
          }
          const Affine2 local = reference_transform(e, e.magnification);
          const int cols = e.kind == ElementKind::array_ref ? e.columns : 1;
          const int rows = e.kind == ElementKind::array_ref ? e.rows : 1;
          const Vec2 cstep = e.kind == ElementKind::array_ref ? e.column_step() : Vec2{};
          const Vec2 rstep = e.kind == ElementKind::array_ref ? e.row_step() : Vec2{};
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
              const Vec2 at = e.origin() + double(c) * cstep + double(r) * rstep;
              visit(it->second, xf * Affine2::translation(at) * local,
                    scale * std::abs(e.magnification));
            }
          break;
        }
      }
    }
    on_stack_.erase(idx);
  }

  void emit(const Element& e, Polygon poly) {
    out_.push_back({e.layer, e.datatype, std::move(poly)});
  }

  const Library& lib_;
  Warnings* warnings_;
  std::unordered_map<std::string, std::size_t> index_;
  std::set<std::size_t> on_stack_;
  std::vector<FlatPolygon> out_;
  bool warned_pathtype_ = false;
  bool warned_absolute_ = false;
};

}  // namespace detail

/// Resolves every reference below `top` (magnification, reflection about x,
/// counterclockwise rotation, translation, applied in that order) and scales
/// coordinates to metres.
inline std::vector<FlatPolygon> flatten(const Library& lib, std::string_view top,
                                        Warnings* warnings = nullptr) {
  return detail::Flattener(lib, warnings).run(top);
}

}  // namespace cqedtk::gds
