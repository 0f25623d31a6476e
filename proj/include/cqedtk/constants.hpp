#pragma once

#include <numbers>

// SI 2019 exact values unless noted.
namespace cqedtk::constants {

inline constexpr double planck = 6.62607015e-34;             // J s
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double speed_of_light = 299792458.0;         // m/s
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m, CODATA 2018
inline constexpr double vacuum_permeability = 1.25663706212e-6;  // H/m, CODATA 2018

/// Magnetic flux quantum h/(2e) = 2.067833848...e-15 Wb.
inline constexpr double flux_quantum = planck / (2.0 * elementary_charge);

/// Reduced flux quantum Phi_0 / (2 pi).
inline constexpr double reduced_flux_quantum = flux_quantum / (2.0 * std::numbers::pi);

}  // namespace cqedtk::constants
