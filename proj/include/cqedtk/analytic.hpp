#pragma once

// Closed-form CPW estimates: conformal-mapping capacitance (thick substrate,
// zero-thickness metal) and quarter-wave resonance.

#include <cmath>
#include <numbers>
#include <string>

#include "constants.hpp"
#include "error.hpp"

namespace cqedtk::analytic {

namespace detail {

inline void check_modulus(double k) {
  if (!(k >= 0.0 && k < 1.0)) throw Error("elliptic modulus must satisfy 0 <= k < 1, got " + std::to_string(k));
}

inline double complementary(double k) { return std::sqrt((1.0 - k) * (1.0 + k)); }

}  // namespace detail

/// Complete elliptic integral of the first kind, modulus convention:
/// K(k) = pi / (2 AGM(1, k')).
inline double ellipk(double k) {
  detail::check_modulus(k);
  double a = 1.0, b = detail::complementary(k);
  for (int i = 0; i < 64 && std::abs(a - b) > 1e-16 * a; ++i) {
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return std::numbers::pi / (2.0 * a);
}

/// Complete elliptic integral of the second kind via the AGM with the
/// accumulated c_n^2 series.
inline double ellipe(double k) {
  detail::check_modulus(k);
  double a = 1.0, b = detail::complementary(k);
  double sum = k * k / 2.0;  // c_0^2 / 2
  double pow2 = 0.5;
  for (int i = 0; i < 64; ++i) {
    const double c = 0.5 * (a - b);
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
    pow2 *= 2.0;
    sum += pow2 * c * c;
    if (std::abs(c) <= 1e-17 * a) break;
  }
  return std::numbers::pi / (2.0 * a) * (1.0 - sum);
}

struct CpwAnalytic {
  double trace_width = 0.0;
  double gap = 0.0;
  double relative_permittivity = 0.0;
  double k = 0.0;
  double effective_permittivity = 0.0;
  double capacitance_per_length = 0.0;  // F/m
  double phase_velocity = 0.0;          // m/s
};

inline CpwAnalytic cpw_caps(double trace_width, double gap, double relative_permittivity) {
  if (!(trace_width > 0.0) || !(gap > 0.0)) throw Error("CPW trace width and gap must be positive");
  if (!(relative_permittivity >= 1.0)) throw Error("relative permittivity must be >= 1");
  CpwAnalytic out;
  out.trace_width = trace_width;
  out.gap = gap;
  out.relative_permittivity = relative_permittivity;
  out.k = trace_width / (trace_width + 2.0 * gap);
  out.effective_permittivity = 0.5 * (relative_permittivity + 1.0);
  const double kp = detail::complementary(out.k);
  out.capacitance_per_length =
      4.0 * constants::vacuum_permittivity * out.effective_permittivity * ellipk(out.k) / ellipk(kp);
  out.phase_velocity = constants::speed_of_light / std::sqrt(out.effective_permittivity);
  return out;
}

/// Characteristic impedance Z0 = 1 / (C v).
inline double characteristic_impedance(const CpwAnalytic& cpw) {
  return 1.0 / (cpw.capacitance_per_length * cpw.phase_velocity);
}

/// f = c / (4 l sqrt(eps_eff)).
inline double quarter_wave_freq(double length, double effective_permittivity) {
  if (!(length > 0.0)) throw Error("resonator length must be positive");
  if (!(effective_permittivity >= 1.0)) throw Error("effective permittivity must be >= 1");
  return constants::speed_of_light / (4.0 * length * std::sqrt(effective_permittivity));
}

/// Length of a quarter-wave resonator at frequency f (inverse of the above).
inline double quarter_wave_length(double frequency, double effective_permittivity) {
  if (!(frequency > 0.0)) throw Error("frequency must be positive");
  return constants::speed_of_light / (4.0 * frequency * std::sqrt(effective_permittivity));
}

}  // namespace cqedtk::analytic
