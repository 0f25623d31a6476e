#pragma once

// Simulated-vs-target comparison in the shape of a resonator summary table.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "specfit.hpp"

namespace cqedtk::report {

struct Target {
  std::string name;
  std::optional<double> f;      // Hz
  std::optional<double> kappa;  // Hz
};

struct Row {
  std::string name;
  double f = 0.0;      // simulated, Hz
  double kappa = 0.0;  // simulated, Hz
  std::optional<double> f_target, kappa_target;
  std::optional<double> f_dev, kappa_dev;  // (sim - target) / target
  bool f_flag = false, kappa_flag = false;
};

struct Report {
  std::vector<Row> rows;
  double freq_tol = 0.003;
  double kappa_tol = 0.16;

  int f_compared() const { return count([](const Row& r) { return r.f_dev.has_value(); }); }
  int f_within() const { return count([](const Row& r) { return r.f_dev && !r.f_flag; }); }
  int kappa_compared() const { return count([](const Row& r) { return r.kappa_dev.has_value(); }); }
  int kappa_within() const { return count([](const Row& r) { return r.kappa_dev && !r.kappa_flag; }); }

 private:
  template <class P>
  int count(P p) const {
    int n = 0;
    for (const auto& r : rows) n += p(r) ? 1 : 0;
    return n;
  }
};

inline double deviation(double sim, double target) { return (sim - target) / target; }

/// Deviations beyond the tolerance are flagged; the comparison is strict so a
/// deviation equal to the tolerance is unflagged.
inline Report build(const std::vector<std::pair<std::string, fit::FitResult>>& fits, const std::vector<Target>& targets,
                    double freq_tol = 0.003, double kappa_tol = 0.16) {
  Report rep;
  rep.freq_tol = freq_tol;
  rep.kappa_tol = kappa_tol;
  for (const auto& [name, r] : fits) {
    Row row;
    row.name = name;
    row.f = r.f_r;
    row.kappa = r.kappa;
    for (const auto& t : targets) {
      if (t.name != name) continue;
      if (t.f && *t.f > 0) {
        row.f_target = *t.f;
        row.f_dev = deviation(row.f, *t.f);
        row.f_flag = std::abs(*row.f_dev) > freq_tol;
      }
      if (t.kappa && *t.kappa > 0) {
        row.kappa_target = *t.kappa;
        row.kappa_dev = deviation(row.kappa, *t.kappa);
        row.kappa_flag = std::abs(*row.kappa_dev) > kappa_tol;
      }
    }
    rep.rows.push_back(row);
  }
  return rep;
}

namespace detail {

inline std::string opt_fixed(const std::optional<double>& v, double scale, int digits) {
  return v ? fmt::format("{:.{}f}", *v * scale, digits) : std::string();
}

inline std::string opt_pct(const std::optional<double>& v, int digits) {
  return v ? fmt::format("{:+.{}f}", *v * 100.0, digits) : std::string();
}

}  // namespace detail

/// f in GHz and kappa in MHz, both to 4 decimals; kappa = f_r / Q_e.
inline std::string to_csv(const Report& rep) {
  std::string out =
      "resonator,f_sim_GHz,f_target_GHz,f_dev_pct,f_flag,kappa_sim_MHz,kappa_target_MHz,kappa_dev_pct,kappa_flag\n";
  for (const auto& r : rep.rows)
    out += fmt::format("{},{:.4f},{},{},{},{:.4f},{},{},{}\n", r.name, r.f * 1e-9, detail::opt_fixed(r.f_target, 1e-9, 4),
                       detail::opt_pct(r.f_dev, 3), r.f_flag ? 1 : 0, r.kappa * 1e-6,
                       detail::opt_fixed(r.kappa_target, 1e-6, 4), detail::opt_pct(r.kappa_dev, 1),
                       r.kappa_flag ? 1 : 0);
  return out;
}

inline std::string to_text(const Report& rep) {
  std::string out;
  out += fmt::format("{:<10} {:>10} {:>10} {:>9}   {:>10} {:>10} {:>8}\n", "resonator", "f sim", "f target", "dev",
                     "kappa sim", "target", "dev");
  out += fmt::format("{:<10} {:>10} {:>10} {:>9}   {:>10} {:>10} {:>8}\n", "", "(GHz)", "(GHz)", "(%)", "(MHz)", "(MHz)",
                     "(%)");
  out += std::string(75, '-') + "\n";
  for (const auto& r : rep.rows) {
    const std::string fd = detail::opt_pct(r.f_dev, 3) + (r.f_flag ? "*" : " ");
    const std::string kd = detail::opt_pct(r.kappa_dev, 1) + (r.kappa_flag ? "*" : " ");
    out += fmt::format("{:<10} {:>10.4f} {:>10} {:>9}   {:>10.4f} {:>10} {:>8}\n", r.name, r.f * 1e-9,
                       detail::opt_fixed(r.f_target, 1e-9, 4), fd, r.kappa * 1e-6,
                       detail::opt_fixed(r.kappa_target, 1e-6, 4), kd);
  }
  out += std::string(75, '-') + "\n";
  out += fmt::format("frequency within {:g}%: {}/{}\n", rep.freq_tol * 100.0, rep.f_within(), rep.f_compared());
  out += fmt::format("coupling within {:g}%: {}/{}\n", rep.kappa_tol * 100.0, rep.kappa_within(), rep.kappa_compared());
  out += "* flagged. kappa is the full external linewidth f_r/Q_e.\n";
  return out;
}

}  // namespace cqedtk::report
