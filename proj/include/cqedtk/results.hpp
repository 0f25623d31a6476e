#pragma once

// Solver output tables: capacitance matrix, eigenmodes with energy
// participation, S-parameter sweeps.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <numbers>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"

namespace cqedtk::results {

class ParseError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Delimited tables
// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> headers;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.at(c));
    return out;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  if (delim == ' ') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      const std::size_t j = line.find_first_of(" \t", i);
      out.push_back(line.substr(i, j == std::string_view::npos ? line.size() - i : j - i));
      i = j == std::string_view::npos ? line.size() : j;
    }
    return out;
  }
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  // Trailing delimiter (Palace pads rows with one).
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

inline char detect_delimiter(std::string_view header) {
  for (char d : {',', ';', '\t'})
    if (header.find(d) != std::string_view::npos) return d;
  return ' ';
}

/// Locale-independent number parsing; accepts inf/nan spellings.
inline double to_double(std::string_view s, std::size_t line) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("line " + std::to_string(line) + ": '" + std::string(s) + "' is not a number");
  return v;
}

}  // namespace detail

inline Table read_table(std::string_view text) {
  Table t;
  char delim = 0;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (!delim) {
      delim = detail::detect_delimiter(line);
      for (auto h : detail::split(line, delim)) t.headers.emplace_back(h);
      if (t.headers.empty()) throw ParseError("empty header row");
      continue;
    }
    const auto cells = detail::split(line, delim);
    if (cells.size() != t.headers.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.headers.size()) +
                       " columns, got " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto c : cells) row.push_back(detail::to_double(c, line_no));
    t.rows.push_back(std::move(row));
  }
  if (t.headers.empty()) throw ParseError("table has no header row");
  return t;
}

// ---------------------------------------------------------------------------
// Header aliases and units
// ---------------------------------------------------------------------------

/// Header spellings seen across solver versions, matched case-insensitively
/// as prefixes in the order given.
namespace aliases {
inline const std::vector<std::string> mode_index{"m", "mode", "index", "#"};
inline const std::vector<std::string> frequency{"re{f}", "f (", "freq", "frequency", "f"};
inline const std::vector<std::string> quality{"q", "quality"};
}  // namespace aliases

/// Unit in trailing parentheses, e.g. "Re{f} (GHz)" -> "GHz".
inline std::string header_unit(std::string_view header) {
  const auto open = header.rfind('(');
  const auto close = header.rfind(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return {};
  return std::string(detail::trim(header.substr(open + 1, close - open - 1)));
}

inline std::optional<std::size_t> find_column(const Table& t, const std::vector<std::string>& names) {
  for (const auto& n : names)
    for (std::size_t i = 0; i < t.headers.size(); ++i)
      if (detail::lower(t.headers[i]).rfind(n, 0) == 0) return i;
  return std::nullopt;
}

inline double frequency_scale(const std::string& unit) {
  const std::string u = detail::lower(unit);
  if (u.empty() || u == "ghz") return 1e9;  // solver default
  if (u == "hz") return 1.0;
  if (u == "khz") return 1e3;
  if (u == "mhz") return 1e6;
  if (u == "thz") return 1e12;
  throw ParseError("unknown frequency unit '" + unit + "'");
}

inline double capacitance_scale(const std::string& unit) {
  static const std::map<std::string, double> s{{"f", 1.0}, {"mf", 1e-3}, {"uf", 1e-6}, {"µf", 1e-6},
                                               {"nf", 1e-9}, {"pf", 1e-12}, {"ff", 1e-15}, {"af", 1e-18}};
  const auto it = s.find(detail::lower(unit));
  if (it == s.end()) throw ParseError("unknown capacitance unit '" + unit + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Capacitance
// ---------------------------------------------------------------------------

struct MaxwellCapMatrix {
  std::vector<std::string> terminal_names;
  Eigen::MatrixXd C;  // F

  std::size_t size() const { return terminal_names.size(); }

  /// Symmetrizes in place; rejects asymmetry or sign-convention violations.
  void validate(double rel_tol = 1e-6) {
    const auto n = static_cast<Eigen::Index>(terminal_names.size());
    if (C.rows() != n || C.cols() != n) throw ParseError("capacitance matrix shape does not match terminal count");
    const double scale = n ? C.diagonal().cwiseAbs().maxCoeff() : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(C(i, i) > 0.0)) throw ParseError("capacitance diagonal entry " + std::to_string(i + 1) + " is not positive");
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double a = C(i, j), b = C(j, i);
        if (std::abs(a - b) > rel_tol * scale)
          throw ParseError("capacitance matrix is asymmetric at (" + std::to_string(i + 1) + ", " +
                           std::to_string(j + 1) + ")");
        const double m = 0.5 * (a + b);
        if (m > rel_tol * scale)
          throw ParseError("positive off-diagonal capacitance at (" + std::to_string(i + 1) + ", " +
                           std::to_string(j + 1) + "): Maxwell matrices have C_ij <= 0");
        C(i, j) = C(j, i) = m;
      }
    }
  }
};

/// Accepts a square block whose first column may be a row index. Units come
/// from the header ("C[i][1] (F)"); bare headers default to farads.
inline MaxwellCapMatrix parse_cap_csv(std::string_view text, std::vector<std::string> names = {}) {
  const Table t = read_table(text);
  std::size_t first = 0;
  if (!t.headers.empty()) {
    const std::string h = detail::lower(t.headers[0]);
    if (h == "i" || h == "#" || h == "index" || h == "terminal") first = 1;
  }
  const std::size_t n = t.headers.size() - first;
  if (n == 0 || t.rows.size() != n)
    throw ParseError("capacitance table must be square; got " + std::to_string(t.rows.size()) + " rows and " +
                     std::to_string(n) + " value columns");
  MaxwellCapMatrix m;
  m.C.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const std::string unit = header_unit(t.headers[first + j]);
    const double scale = unit.empty() ? 1.0 : capacitance_scale(unit);
    for (std::size_t i = 0; i < n; ++i)
      m.C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][first + j] * scale;
  }
  if (names.empty())
    for (std::size_t i = 0; i < n; ++i) names.push_back(std::to_string(i + 1));
  if (names.size() != n) throw ParseError("terminal name count does not match capacitance matrix");
  m.terminal_names = std::move(names);
  m.validate();
  return m;
}

struct MutualCaps {
  Eigen::MatrixXd mutual;   // C_ij >= 0 off-diagonal, zero diagonal
  Eigen::VectorXd to_ground;  // row sums
};

inline MutualCaps maxwell_to_mutual(const MaxwellCapMatrix& m, double rel_tol = 1e-6) {
  const auto n = m.C.rows();
  MutualCaps out;
  out.mutual = -m.C;
  out.mutual.diagonal().setZero();
  out.to_ground = m.C.rowwise().sum();
  const double scale = n ? m.C.diagonal().cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.to_ground(i) < -rel_tol * scale)
      throw ParseError("terminal " + m.terminal_names.at(static_cast<std::size_t>(i)) +
                       " has negative capacitance to ground");
    out.to_ground(i) = std::max(0.0, out.to_ground(i));
  }
  return out;
}

inline Eigen::MatrixXd mutual_to_maxwell(const MutualCaps& c) {
  Eigen::MatrixXd m = -c.mutual;
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, i) = c.to_ground(i) + c.mutual.row(i).sum();
  return m;
}

// ---------------------------------------------------------------------------
// Eigenmodes and participation
// ---------------------------------------------------------------------------

struct ModeResult {
  int index = 0;
  double frequency = 0.0;  // Hz
  double q = 0.0;
  std::vector<double> participation;  // per junction
  std::vector<int> sign;              // +-1 per junction
};

inline std::vector<ModeResult> parse_eig_csv(std::string_view text) {
  const Table t = read_table(text);
  const auto ci = find_column(t, aliases::mode_index);
  const auto cf = find_column(t, aliases::frequency);
  if (!ci || !cf) throw ParseError("eigenmode table needs mode index and frequency columns");
  const auto cq = find_column(t, aliases::quality);
  const double scale = frequency_scale(header_unit(t.headers[*cf]));
  std::vector<ModeResult> modes;
  for (const auto& r : t.rows) {
    ModeResult m;
    m.index = static_cast<int>(std::lround(r[*ci]));
    m.frequency = r[*cf] * scale;
    m.q = cq ? r[*cq] : std::numeric_limits<double>::infinity();
    if (!(m.frequency > 0.0)) throw ParseError("mode " + std::to_string(m.index) + " has non-positive frequency");
    if (!(m.q > 0.0)) throw ParseError("mode " + std::to_string(m.index) + " has non-positive Q");
    modes.push_back(std::move(m));
  }
  return modes;
}

/// Joins a port-EPR table onto modes by index. Columns "p[j]" hold the
/// participations; optional "s[j]" hold signs.
inline void attach_epr_csv(std::vector<ModeResult>& modes, std::string_view text, double tol = 1e-6) {
  const Table t = read_table(text);
  const auto ci = find_column(t, aliases::mode_index);
  if (!ci) throw ParseError("EPR table needs a mode index column");
  const std::regex pcol(R"(^p(_?\w*)?\[(\d+)\])"), scol(R"(^s\[(\d+)\])");
  std::map<int, std::size_t> pcols, scols;
  for (std::size_t c = 0; c < t.headers.size(); ++c) {
    const std::string h = detail::lower(t.headers[c]);
    std::smatch m;
    if (std::regex_search(h, m, scol)) scols[std::stoi(m[1])] = c;
    else if (std::regex_search(h, m, pcol)) pcols[std::stoi(m[2])] = c;
  }
  if (pcols.empty()) throw ParseError("EPR table has no p[j] columns");
  std::map<int, const std::vector<double>*> by_index;
  for (const auto& r : t.rows) by_index[static_cast<int>(std::lround(r[*ci]))] = &r;
  if (by_index.size() != modes.size()) throw ParseError("EPR table and eigenmode table list different modes");
  for (auto& m : modes) {
    const auto it = by_index.find(m.index);
    if (it == by_index.end()) throw ParseError("EPR table has no row for mode " + std::to_string(m.index));
    const auto& row = *it->second;
    m.participation.clear();
    m.sign.clear();
    double total = 0.0;
    for (const auto& [j, col] : pcols) {
      double p = row[col];
      if (p < -tol || p > 1.0 + tol)
        throw ParseError("participation p[" + std::to_string(j) + "] = " + std::to_string(p) + " of mode " +
                         std::to_string(m.index) + " is outside [0, 1]");
      p = std::clamp(p, 0.0, 1.0);
      total += p;
      m.participation.push_back(p);
      const auto s = scols.find(j);
      m.sign.push_back(s == scols.end() || row[s->second] >= 0.0 ? 1 : -1);
    }
    if (total > 1.0 + tol) throw ParseError("participations of mode " + std::to_string(m.index) + " sum above 1");
  }
}

inline std::vector<ModeResult> parse_modes(std::string_view eig_csv, std::optional<std::string_view> epr_csv = {}) {
  auto modes = parse_eig_csv(eig_csv);
  if (epr_csv) attach_epr_csv(modes, *epr_csv);
  return modes;
}

inline std::vector<ModeResult> filter_modes(const std::vector<ModeResult>& modes, double f_lo, double f_hi,
                                            double q_min = 0.0) {
  std::vector<ModeResult> out;
  for (const auto& m : modes)
    if (m.frequency >= f_lo && m.frequency <= f_hi && m.q >= q_min) out.push_back(m);
  return out;
}

// ---------------------------------------------------------------------------
// S-parameters
// ---------------------------------------------------------------------------

using PortPair = std::pair<int, int>;  // (i, j) of S_ij, 1-based

struct SParamSet {
  std::vector<double> frequencies;  // Hz
  std::map<PortPair, std::vector<std::complex<double>>> s;
  double reference_impedance = 50.0;

  const std::vector<std::complex<double>>& at(int i, int j) const {
    const auto it = s.find({i, j});
    if (it == s.end()) throw ParseError("S[" + std::to_string(i) + "][" + std::to_string(j) + "] not in table");
    return it->second;
  }
};

/// Magnitude/phase ("|S[2][1]| (dB)", "arg(S[2][1]) (deg.)") or real/imag
/// ("Re{S[2][1]}", "Im{S[2][1]}") columns, detected per port pair.
inline SParamSet parse_sparams_csv(std::string_view text, Warnings* warnings = nullptr,
                                   std::optional<std::pair<double, double>> band = {}) {
  const Table t = read_table(text);
  const auto cf = find_column(t, aliases::frequency);
  if (!cf) throw ParseError("S-parameter table needs a frequency column");
  const double fscale = frequency_scale(header_unit(t.headers[*cf]));

  struct Cols {
    std::optional<std::size_t> mag, arg, re, im;
    std::string mag_unit, arg_unit;
  };
  std::map<PortPair, Cols> cols;
  const std::regex mag(R"(^\|s\[(\d+)\]\[(\d+)\]\|)"), arg(R"(^arg\s*\(\s*s\[(\d+)\]\[(\d+)\]\s*\))"),
      re(R"(^re\s*\{\s*s\[(\d+)\]\[(\d+)\]\s*\})"), im(R"(^im\s*\{\s*s\[(\d+)\]\[(\d+)\]\s*\})");
  for (std::size_t c = 0; c < t.headers.size(); ++c) {
    const std::string h = detail::lower(t.headers[c]);
    std::smatch m;
    const auto key = [&] { return PortPair{std::stoi(m[1]), std::stoi(m[2])}; };
    if (std::regex_search(h, m, mag)) {
      cols[key()].mag = c;
      cols[key()].mag_unit = detail::lower(header_unit(t.headers[c]));
    } else if (std::regex_search(h, m, arg)) {
      cols[key()].arg = c;
      cols[key()].arg_unit = detail::lower(header_unit(t.headers[c]));
    } else if (std::regex_search(h, m, re)) {
      cols[key()].re = c;
    } else if (std::regex_search(h, m, im)) {
      cols[key()].im = c;
    }
  }
  if (cols.empty()) throw ParseError("no S-parameter columns recognized (expected |S[i][j]|/arg or Re{}/Im{})");

  SParamSet out;
  out.frequencies.reserve(t.rows.size());
  for (const auto& r : t.rows) out.frequencies.push_back(r[*cf] * fscale);
  for (std::size_t k = 1; k < out.frequencies.size(); ++k)
    if (!(out.frequencies[k] > out.frequencies[k - 1]))
      throw ParseError("frequency column is not strictly increasing at row " + std::to_string(k + 1));
  if (band && !out.frequencies.empty() &&
      (out.frequencies.front() < band->first * (1 - 1e-9) || out.frequencies.back() > band->second * (1 + 1e-9)))
    warn(warnings, "S-parameter frequencies extend outside the requested band");

  for (const auto& [pair, c] : cols) {
    std::vector<std::complex<double>> v;
    v.reserve(t.rows.size());
    if (c.re && c.im) {
      for (const auto& r : t.rows) v.emplace_back(r[*c.re], r[*c.im]);
    } else if (c.mag && c.arg) {
      const bool db = c.mag_unit == "db";
      if (!(db || c.mag_unit.empty() || c.mag_unit == "lin" || c.mag_unit == "linear"))
        throw ParseError("unknown magnitude unit '" + c.mag_unit + "'");
      double ascale = 1.0;
      if (c.arg_unit.rfind("deg", 0) == 0) ascale = std::numbers::pi / 180.0;
      else if (!(c.arg_unit.empty() || c.arg_unit == "rad")) throw ParseError("unknown phase unit '" + c.arg_unit + "'");
      for (const auto& r : t.rows) {
        const double a = db ? std::pow(10.0, r[*c.mag] / 20.0) : r[*c.mag];
        v.push_back(std::polar(a, r[*c.arg] * ascale));
      }
    } else {
      throw ParseError("S[" + std::to_string(pair.first) + "][" + std::to_string(pair.second) +
                       "] has an incomplete column pair");
    }
    std::size_t active = 0;
    for (const auto& x : v) active += std::abs(x) > 1.0 + 1e-3;
    if (active)
      warn(warnings, "S[" + std::to_string(pair.first) + "][" + std::to_string(pair.second) + "] exceeds unit magnitude at " +
                         std::to_string(active) + " frequencies (non-passive)");
    out.s[pair] = std::move(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solver metadata
// ---------------------------------------------------------------------------

/// Degrees of freedom from the solver's JSON metadata, searched by key name.
inline std::optional<long long> find_dofs(const nlohmann::json& doc) {
  if (doc.is_object()) {
    for (const auto& [k, v] : doc.items()) {
      const std::string key = detail::lower(k);
      if ((key == "degreesoffreedom" || key == "dofs" || key == "ndof" || key == "globalndof") && v.is_number())
        return v.get<long long>();
    }
    for (const auto& [k, v] : doc.items())
      if (auto r = find_dofs(v)) return r;
  } else if (doc.is_array()) {
    for (const auto& v : doc)
      if (auto r = find_dofs(v)) return r;
  }
  return std::nullopt;
}

}  // namespace cqedtk::results
