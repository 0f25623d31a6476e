#pragma once

// Circuit Hamiltonians from EM results: leading-order EPR Kerr matrix and the
// lumped-oscillator (capacitance) reduction.
//
// Sign convention: alpha and chi are positive magnitudes of downward shifts.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "results.hpp"

namespace cqedtk::quantum {

class QuantizeError : public Error {
 public:
  using Error::Error;
};

/// E_J = (Phi_0 / 2 pi)^2 / L_J, joules.
inline double josephson_energy(double inductance) {
  if (!(inductance > 0.0)) throw QuantizeError("junction inductance must be positive");
  const double phi = constants::reduced_flux_quantum;
  return phi * phi / inductance;
}

/// E_C = e^2 / (2 C), joules.
inline double charging_energy(double capacitance) {
  if (!(capacitance > 0.0)) throw QuantizeError("capacitance must be positive");
  const double e = constants::elementary_charge;
  return e * e / (2.0 * capacitance);
}

inline double to_hz(double joules) { return joules / constants::planck; }

struct HamiltonianSpec {
  std::vector<std::string> mode_names;
  std::vector<double> f;          // bare, Hz
  std::vector<double> f_dressed;  // Hz
  std::vector<double> alpha;      // Hz
  Eigen::MatrixXd chi;            // Hz
  Eigen::MatrixXd g;              // Hz, lumped path only
  std::vector<double> e_j;        // J, per junction (EPR) or per subsystem (LOM; 0 for resonators)
  std::vector<double> e_c;        // J, LOM only
  std::vector<double> c_sigma;    // F, LOM only
};

/// chi_mn = f_m f_n sum_j p_mj p_nj / (4 E_J,j / h); alpha_m = chi_mm / 2.
/// Signs s_mj only enter at higher order and are ignored here.
inline HamiltonianSpec epr_kerr(const std::vector<results::ModeResult>& modes, const std::vector<double>& e_j) {
  for (double e : e_j)
    if (!(e > 0.0)) throw QuantizeError("Josephson energies must be positive");
  const auto n = static_cast<Eigen::Index>(modes.size());
  HamiltonianSpec h;
  h.e_j = e_j;
  h.chi = Eigen::MatrixXd::Zero(n, n);
  for (const auto& m : modes) {
    if (!e_j.empty() && m.participation.size() != e_j.size())
      throw QuantizeError("mode " + std::to_string(m.index) + " has " + std::to_string(m.participation.size()) +
                          " participations for " + std::to_string(e_j.size()) + " junctions");
    h.mode_names.push_back("mode" + std::to_string(m.index));
    h.f.push_back(m.frequency);
  }
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a; b < n; ++b) {
      double sum = 0.0;
      for (std::size_t j = 0; j < e_j.size(); ++j)
        sum += modes[a].participation[j] * modes[b].participation[j] / (4.0 * to_hz(e_j[j]));
      h.chi(a, b) = h.chi(b, a) = h.f[a] * h.f[b] * sum;
    }
  for (Eigen::Index a = 0; a < n; ++a) {
    h.alpha.push_back(h.chi(a, a) / 2.0);
    const double cross = h.chi.row(a).sum() - h.chi(a, a);
    h.f_dressed.push_back(h.f[a] - h.alpha.back() - 0.5 * cross);
  }
  h.g = Eigen::MatrixXd::Zero(n, n);
  return h;
}

// ---------------------------------------------------------------------------
// Lumped oscillator model
// ---------------------------------------------------------------------------

/// One circuit subsystem. One terminal: grounded node. Two terminals: a
/// floating element whose coordinate is the pad-to-pad voltage.
struct Subsystem {
  std::string name;
  std::vector<std::string> terminals;
  std::optional<double> e_j;        // J; present for qubits
  std::optional<double> frequency;  // Hz; required for resonators
};

/// Capacitance matrix in subsystem coordinates after eliminating every
/// coordinate that carries no charge dynamics (common modes, unassigned islands).
inline Eigen::MatrixXd effective_capacitance(const results::MaxwellCapMatrix& m, const std::vector<Subsystem>& subs) {
  const auto n = static_cast<Eigen::Index>(m.size());
  const auto index_of = [&](const std::string& t) {
    for (std::size_t i = 0; i < m.terminal_names.size(); ++i)
      if (m.terminal_names[i] == t) return static_cast<Eigen::Index>(i);
    throw QuantizeError("terminal '" + t + "' is not in the capacitance matrix");
  };
  // Columns of T map new coordinates to terminal voltages; active ones first.
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  Eigen::Index col = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  for (const auto& s : subs) {
    if (s.terminals.empty() || s.terminals.size() > 2)
      throw QuantizeError("subsystem '" + s.name + "' must have one or two terminals");
    std::vector<Eigen::Index> idx;
    for (const auto& t : s.terminals) {
      const auto i = index_of(t);
      if (used[static_cast<std::size_t>(i)]) throw QuantizeError("terminal '" + t + "' assigned twice");
      used[static_cast<std::size_t>(i)] = true;
      idx.push_back(i);
    }
    if (idx.size() == 1) {
      T(idx[0], col++) = 1.0;
    } else {
      T(idx[0], col) = 0.5;
      T(idx[1], col) = -0.5;
      ++col;
      pairs.emplace_back(idx[0], idx[1]);
    }
  }
  const Eigen::Index active = col;
  for (const auto& [a, b] : pairs) {
    T(a, col) = 1.0;
    T(b, col) = 1.0;
    ++col;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!used[static_cast<std::size_t>(i)]) T(i, col++) = 1.0;
  const Eigen::MatrixXd cp = T.transpose() * m.C * T;
  const Eigen::MatrixXd inv = cp.inverse();
  return inv.topLeftCorner(active, active).inverse();
}

/// f_q = (sqrt(8 E_J E_C) - E_C) / h; g_ij = 1/2 C_c / sqrt(C_S1 C_S2) sqrt(f_1 f_2).
inline HamiltonianSpec lom_reduce(const results::MaxwellCapMatrix& m, const std::vector<Subsystem>& subs) {
  if (subs.empty()) throw QuantizeError("no subsystems given");
  const Eigen::MatrixXd c = effective_capacitance(m, subs);
  const auto n = static_cast<Eigen::Index>(subs.size());
  HamiltonianSpec h;
  h.chi = Eigen::MatrixXd::Zero(n, n);
  h.g = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = subs[static_cast<std::size_t>(i)];
    const double cs = c(i, i);
    if (!(cs > 0.0)) throw QuantizeError("subsystem '" + s.name + "' has zero total capacitance");
    const double ec = charging_energy(cs);
    h.mode_names.push_back(s.name);
    h.c_sigma.push_back(cs);
    h.e_c.push_back(ec);
    if (s.e_j) {
      if (!(*s.e_j > 0.0)) throw QuantizeError("qubit '" + s.name + "' needs a positive E_J");
      h.e_j.push_back(*s.e_j);
      h.f.push_back(to_hz(std::sqrt(8.0 * *s.e_j * ec) - ec));
      h.alpha.push_back(to_hz(ec));
    } else {
      if (!s.frequency || !(*s.frequency > 0.0))
        throw QuantizeError("subsystem '" + s.name + "' has neither E_J nor a frequency");
      h.e_j.push_back(0.0);
      h.f.push_back(*s.frequency);
      h.alpha.push_back(0.0);
    }
    h.chi(i, i) = 2.0 * h.alpha.back();
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double cc = std::abs(c(i, j));
      h.g(i, j) = h.g(j, i) = 0.5 * cc / std::sqrt(c(i, i) * c(j, j)) * std::sqrt(h.f[i] * h.f[j]);
    }
  h.f_dressed = h.f;
  for (std::size_t i = 0; i < h.f.size(); ++i) h.f_dressed[i] -= h.alpha[i];
  return h;
}

// ---------------------------------------------------------------------------
// Serialization (GHz for frequencies, MHz for alpha/chi/g)
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const HamiltonianSpec& h) {
  using json = nlohmann::ordered_json;
  json modes = json::array();
  for (std::size_t i = 0; i < h.mode_names.size(); ++i) {
    json m = {{"name", h.mode_names[i]}, {"f_GHz", h.f[i] * 1e-9}, {"f_dressed_GHz", h.f_dressed[i] * 1e-9},
              {"alpha_MHz", h.alpha[i] * 1e-6}};
    if (i < h.e_c.size()) m["E_C_over_h_MHz"] = to_hz(h.e_c[i]) * 1e-6;
    if (i < h.c_sigma.size()) m["C_sigma_fF"] = h.c_sigma[i] * 1e15;
    modes.push_back(m);
  }
  const auto matrix = [](const Eigen::MatrixXd& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      json r = json::array();
      for (Eigen::Index j = 0; j < a.cols(); ++j) r.push_back(a(i, j) * 1e-6);
      rows.push_back(r);
    }
    return rows;
  };
  json ej = json::array();
  for (double e : h.e_j) ej.push_back(to_hz(e) * 1e-9);
  return {{"modes", modes}, {"chi_MHz", matrix(h.chi)}, {"g_MHz", matrix(h.g)}, {"E_J_over_h_GHz", ej}};
}

inline std::string to_text(const HamiltonianSpec& h) {
  std::string out = fmt::format("{:<12} {:>12} {:>12} {:>12}\n", "mode", "f (GHz)", "f_d (GHz)", "alpha (MHz)");
  for (std::size_t i = 0; i < h.mode_names.size(); ++i)
    out += fmt::format("{:<12} {:>12.6f} {:>12.6f} {:>12.4f}\n", h.mode_names[i], h.f[i] * 1e-9, h.f_dressed[i] * 1e-9,
                       h.alpha[i] * 1e-6);
  const auto block = [&](const char* title, const Eigen::MatrixXd& a) {
    if (a.size() == 0 || a.cwiseAbs().maxCoeff() == 0.0) return;
    out += fmt::format("{} (MHz)\n", title);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out += fmt::format("{:<12}", h.mode_names[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < a.cols(); ++j) out += fmt::format(" {:>12.4f}", a(i, j) * 1e-6);
      out += '\n';
    }
  };
  block("chi", h.chi);
  block("g", h.g);
  return out;
}

}  // namespace cqedtk::quantum
