#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cqedtk/analytic.hpp"

using namespace cqedtk;
using namespace cqedtk::analytic;

namespace {

// The integrands are smooth and periodic over [0, pi], so the trapezoid rule
// converges geometrically; long double keeps the reference well below 1e-14.
long double trapezoid_k(long double k, int n = 4000) {
  long double sum = 0;
  for (int i = 0; i < n; ++i) {
    const long double t = std::numbers::pi_v<long double> * i / n;
    sum += 1.0L / std::sqrt(1.0L - k * k * std::sin(t) * std::sin(t));
  }
  return sum * std::numbers::pi_v<long double> / n / 2.0L;
}

long double trapezoid_e(long double k, int n = 4000) {
  long double sum = 0;
  for (int i = 0; i < n; ++i) {
    const long double t = std::numbers::pi_v<long double> * i / n;
    sum += std::sqrt(1.0L - k * k * std::sin(t) * std::sin(t));
  }
  return sum * std::numbers::pi_v<long double> / n / 2.0L;
}

}  // namespace

TEST(Ellipk, Zero) { EXPECT_DOUBLE_EQ(ellipk(0.0), std::numbers::pi / 2); }

TEST(Ellipk, Half) {
  EXPECT_NEAR(ellipk(0.5), 1.6857503548, 1e-9);
  EXPECT_NEAR(ellipk(0.5), static_cast<double>(trapezoid_k(0.5L)), 1e-14);
}

TEST(Ellipk, AgreesWithQuadrature) {
  for (double k : {0.01, 0.1, 0.3, 0.45454545, 0.7, 0.9, 0.95}) {
    const double ref = static_cast<double>(trapezoid_k(k));
    EXPECT_NEAR(ellipk(k), ref, 1e-14 * ref) << "k=" << k;
    const double refe = static_cast<double>(trapezoid_e(k));
    EXPECT_NEAR(ellipe(k), refe, 1e-14 * refe) << "k=" << k;
  }
}

TEST(Ellipk, NearOneStaysFinite) {
  const double v = ellipk(0.9999);
  EXPECT_TRUE(std::isfinite(v));
  // Asymptote K ~ ln(4/k') for k -> 1.
  const double kp = std::sqrt(1 - 0.9999 * 0.9999);
  EXPECT_NEAR(v, std::log(4 / kp), 1e-3);
}

TEST(Ellipk, RejectsModulusOne) {
  EXPECT_THROW(ellipk(1.0), Error);
  EXPECT_THROW(ellipk(-0.1), Error);
  EXPECT_THROW(ellipe(1.5), Error);
}

TEST(Ellipk, MonotoneAboveHalfPi) {
  double last = ellipk(0.0);
  for (int i = 1; i < 1000; ++i) {
    const double v = ellipk(i / 1000.0);
    EXPECT_GT(v, last);
    EXPECT_GT(v, std::numbers::pi / 2);
    last = v;
  }
}

TEST(Ellipk, LegendreRelation) {
  for (double k : {0.1, 0.5, 0.9}) {
    const double kp = std::sqrt(1 - k * k);
    const double lhs = ellipk(k) * ellipe(kp) + ellipe(k) * ellipk(kp) - ellipk(k) * ellipk(kp);
    EXPECT_NEAR(lhs, std::numbers::pi / 2, 1e-12) << "k=" << k;
  }
}

TEST(CpwCaps, TenSixOnSilicon) {
  const auto c = cpw_caps(10e-6, 6e-6, 11.49);
  EXPECT_NEAR(c.k, 10.0 / 22.0, 1e-15);
  EXPECT_NEAR(c.k, 0.45455, 5e-6);
  EXPECT_NEAR(c.effective_permittivity, 6.245, 1e-12);
  const double kp = std::sqrt(1 - c.k * c.k);
  const double expected = 4 * 8.8541878128e-12 * 6.245 * static_cast<double>(trapezoid_k(c.k) / trapezoid_k(kp));
  EXPECT_NEAR(c.capacitance_per_length, expected, 1e-13 * expected);
  EXPECT_NEAR(c.phase_velocity, 299792458.0 / std::sqrt(6.245), 1e-6);
  // Textbook sanity: this geometry sits near 50 ohm on silicon.
  EXPECT_NEAR(characteristic_impedance(c), 50.0, 3.0);
}

TEST(CpwCaps, ScaleInvariant) {
  const auto a = cpw_caps(10e-6, 6e-6, 11.49);
  for (double s : {0.1, 2.0, 37.0}) {
    const auto b = cpw_caps(10e-6 * s, 6e-6 * s, 11.49);
    EXPECT_NEAR(b.capacitance_per_length, a.capacitance_per_length, 1e-14 * a.capacitance_per_length);
  }
}

TEST(CpwCaps, DecreasesWithGap) {
  double last = cpw_caps(10e-6, 1e-6, 11.49).capacitance_per_length;
  for (double s = 2e-6; s < 1e-3; s *= 1.7) {
    const double c = cpw_caps(10e-6, s, 11.49).capacitance_per_length;
    EXPECT_LT(c, last);
    last = c;
  }
}

TEST(CpwCaps, RejectsBadGeometry) {
  EXPECT_THROW(cpw_caps(0.0, 6e-6, 11.49), Error);
  EXPECT_THROW(cpw_caps(10e-6, -1.0, 11.49), Error);
  EXPECT_THROW(cpw_caps(10e-6, 6e-6, 0.5), Error);
}

TEST(QuarterWave, FourMillimetre) {
  // Long double re-evaluation: c / (4 l sqrt(eps)).
  const long double ref = 299792458.0L / (4.0L * 4e-3L * std::sqrt(6.245L));
  const double f = quarter_wave_freq(4e-3, 6.245);
  EXPECT_NEAR(f, static_cast<double>(ref), 1e-4 * static_cast<double>(ref));
  EXPECT_NEAR(f, 7.498e9, 1e-4 * 7.498e9);
}

TEST(QuarterWave, LengthDoublingHalves) {
  EXPECT_DOUBLE_EQ(quarter_wave_freq(8e-3, 6.245), quarter_wave_freq(4e-3, 6.245) / 2);
}

TEST(QuarterWave, UnitCheck) {
  EXPECT_DOUBLE_EQ(quarter_wave_freq(299792458.0 / 4, 1.0), 1.0);
  EXPECT_NEAR(quarter_wave_length(quarter_wave_freq(4e-3, 6.245), 6.245), 4e-3, 1e-18);
}
