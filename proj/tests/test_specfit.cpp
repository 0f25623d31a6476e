#include <cqedtk/specfit.hpp>

#include <random>

#include <gtest/gtest.h>

using namespace cqedtk;
using namespace cqedtk::fit;

namespace {

// Oracle model written out independently of notch_model.
std::complex<double> s21(double f, double fr, double ql, double qe, double phi, double a, double theta, double tau) {
  const std::complex<double> i(0, 1);
  return a * std::exp(i * theta) * std::exp(-2.0 * 3.14159265358979323846 * i * f * tau) *
         (1.0 - (ql / qe) * std::exp(i * phi) / (1.0 + 2.0 * i * ql * (f - fr) / fr));
}

struct Sweep {
  std::vector<double> f;
  std::vector<std::complex<double>> z;
};

Sweep synth(double fr, double ql, double qe, double phi, double sigma, std::mt19937_64* rng, std::size_t n = 401,
            double a = 0.8, double theta = 0.4, double tau = 40e-9) {
  Sweep s;
  const double lw = fr / ql;
  const double lo = fr - 4.3 * lw, hi = fr + 3.7 * lw;
  std::normal_distribution<double> g(0.0, sigma);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    auto v = s21(f, fr, ql, qe, phi, a, theta, tau);
    if (rng) v += std::complex<double>(g(*rng), g(*rng));
    s.f.push_back(f);
    s.z.push_back(v);
  }
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return 0.5 * (v[(v.size() - 1) / 2] + v[v.size() / 2]);
}

}  // namespace

TEST(KappaFromQ, TableValues) {
  EXPECT_NEAR(kappa_from_q(7.1933e9, 19981.4) * 1e-6, 0.3600, 5e-5);
  EXPECT_NEAR(7.6551e9 / 0.1740e6, 43995, 1.0);
  EXPECT_NEAR(kappa_from_q(7.6551e9, 7.6551e9 / 0.1740e6), 0.1740e6, 1e-6);
  EXPECT_EQ(kappa_from_q(7e9, std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_LT(kappa_from_q(7e9, 1e12), 1e-2);
  EXPECT_THROW(kappa_from_q(7e9, 0.0), FitError);
}

TEST(FitNotch, NoiseFreeExact) {
  const auto s = synth(7.2e9, 15000, 20000, 0.1, 0.0, nullptr);
  const auto r = fit_notch(s.f, s.z);
  EXPECT_NEAR(r.f_r / 7.2e9 - 1, 0, 1e-8);
  EXPECT_NEAR(r.q_l / 15000 - 1, 0, 1e-8);
  EXPECT_NEAR(r.q_e / 20000 - 1, 0, 1e-8);
  EXPECT_NEAR(r.phi, 0.1, 1e-8);
  EXPECT_NEAR(r.kappa, 7.2e9 / 20000, 7.2e9 / 20000 * 1e-8);
  EXPECT_LT(r.residual_rms, 1e-10);
}

TEST(FitNotch, NoiseFreeAcrossCouplingRegimes) {
  for (double qe : {4000.0, 20000.0, 150000.0})
    for (double phi : {-0.4, 0.0, 0.3}) {
      const double ql = 1.0 / (1.0 / 60000.0 + std::cos(phi) / qe);
      const auto s = synth(6.1e9, ql, qe, phi, 0.0, nullptr, 301, 1.3, -2.0, 55e-9);
      const auto r = fit_notch(s.f, s.z);
      EXPECT_NEAR(r.f_r / 6.1e9 - 1, 0, 1e-8) << qe << " " << phi;
      EXPECT_NEAR(r.q_e / qe - 1, 0, 1e-8) << qe << " " << phi;
      EXPECT_NEAR(r.q_i / 60000 - 1, 0, 1e-6) << qe << " " << phi;
    }
}

TEST(FitNotch, NoisyRecoveryStatistics) {
  std::mt19937_64 rng(2024);
  std::vector<double> ef, eq;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = synth(7.2e9, 15000, 20000, 0.1, 1e-3, &rng);
    const auto r = fit_notch(s.f, s.z);
    ef.push_back(std::abs(r.f_r / 7.2e9 - 1));
    eq.push_back(std::abs(r.q_e / 20000 - 1));
    EXPECT_LE(r.q_l, r.q_e * 1.01);
  }
  EXPECT_LT(median(ef), 1e-6);
  EXPECT_LT(median(eq), 0.01);
}

TEST(FitNotch, InvariantUnderBackground) {
  std::mt19937_64 rng(5);
  const auto s = synth(7.2e9, 15000, 20000, 0.1, 1e-3, &rng);
  const auto base = fit_notch(s.f, s.z);
  auto t = s;
  const std::complex<double> c = std::polar(2.5, 1.1);
  for (std::size_t k = 0; k < t.f.size(); ++k)
    t.z[k] = t.z[k] * c * std::polar(1.0, -2.0 * 3.14159265358979323846 * t.f[k] * 13e-9);
  const auto moved = fit_notch(t.f, t.z);
  EXPECT_NEAR(moved.f_r / base.f_r - 1, 0, 1e-9);
  EXPECT_NEAR(moved.q_l / base.q_l - 1, 0, 1e-7);
  EXPECT_NEAR(moved.q_e / base.q_e - 1, 0, 1e-7);
  EXPECT_NEAR(moved.phi, base.phi, 1e-7);
}

TEST(FitNotch, ResultInsideWindowWithCovariance) {
  std::mt19937_64 rng(9);
  const auto s = synth(7.2e9, 15000, 20000, 0.1, 1e-3, &rng);
  const auto r = fit_notch(s.f, s.z);
  EXPECT_GT(r.f_r, s.f.front());
  EXPECT_LT(r.f_r, s.f.back());
  EXPECT_GT(r.kappa, 0);
  EXPECT_GT(r.sigma_f_r, 0);
  EXPECT_LT(std::abs(r.f_r - 7.2e9), 6 * r.sigma_f_r);
  EXPECT_LT(std::abs(r.q_e - 20000), 6 * r.sigma_q_e);
}

TEST(FitNotch, FailureModes) {
  Sweep flat;
  for (int k = 0; k < 100; ++k) {
    flat.f.push_back(7e9 + k * 1e4);
    flat.z.push_back(std::polar(0.9, 0.01 * k));
  }
  EXPECT_THROW(fit_notch(flat.f, flat.z), FitError);
  const auto s = synth(7.2e9, 15000, 20000, 0.1, 0.0, nullptr, 19);
  EXPECT_THROW(fit_notch(s.f, s.z), FitError);
  // resonance outside the sampled band: only a tail enters the window
  auto edge = synth(7.2e9, 15000, 20000, 0.1, 0.0, nullptr, 400);
  std::vector<double> fe(edge.f.begin(), edge.f.begin() + 150);
  std::vector<std::complex<double>> ze(edge.z.begin(), edge.z.begin() + 150);
  EXPECT_THROW(fit_notch(fe, ze), FitError);
}

TEST(FitNotch, SweepWindowAndDipFinder) {
  results::SParamSet sw;
  const double f1 = 7.20e9, f2 = 7.29e9;
  for (int k = 0; k <= 6000; ++k) {
    const double f = 7.18e9 + k * 20e3;
    sw.frequencies.push_back(f);
    sw.s[{2, 1}].push_back(s21(f, f1, 15000, 20000, 0.0, 1, 0, 0) * s21(f, f2, 40000, 60000, 0.05, 1, 0, 0));
  }
  const auto windows = find_dips(sw, {2, 1});
  ASSERT_EQ(windows.size(), 2u);
  EXPECT_LT(windows[0].first, f1);
  EXPECT_GT(windows[0].second, f1);
  EXPECT_LT(windows[0].second, windows[1].first + 1);
  const auto r1 = fit_notch(sw, {2, 1}, windows[0]);
  const auto r2 = fit_notch(sw, {2, 1}, windows[1]);
  EXPECT_NEAR(r1.f_r / f1 - 1, 0, 1e-7);
  EXPECT_NEAR(r2.f_r / f2 - 1, 0, 1e-7);
  EXPECT_NEAR(r1.q_e / 20000 - 1, 0, 2e-3);
  EXPECT_NEAR(r2.q_e / 60000 - 1, 0, 2e-3);
  const auto table = fit_table({{"R1", r1}, {"R2", r2}});
  EXPECT_EQ(table.rfind("name,f_r_GHz,", 0), 0u);
  const auto [data, model] = plot_data(std::vector<double>{f1}, {sw.at(2, 1)[1000]}, r1);
  EXPECT_EQ(std::count(data.begin(), data.end(), ' '), 1);
  EXPECT_EQ(std::count(model.begin(), model.end(), '\n'), 1);
}

namespace {

ConvergencePoint pt(double r, double f, long long dofs = 0, int order = 4) { return {r, order, dofs, f, {}}; }

}  // namespace

TEST(Richardson, ExactOnConstructedSequence) {
  std::vector<ConvergencePoint> pts;
  for (int r = 0; r <= 2; ++r) pts.push_back(pt(r, 7.5e9 * (1 + 0.01 * std::pow(4.0, -r))));
  const auto e = richardson_extrapolate(pts);
  EXPECT_NEAR(e.f_inf / 7.5e9 - 1, 0, 1e-10);
  EXPECT_NEAR(e.rate, 2.0, 1e-9);
  EXPECT_NEAR(e.deviation[0], 0.01, 1e-10);
  EXPECT_NEAR(e.deviation[2], 0.01 / 16, 1e-10);
}

TEST(Richardson, ExactOnOwnModel) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> finf_d(4e9, 9e9), amp(-0.05, 0.05), rate(0.5, 3.0), dr(0.3, 0.8);
  for (int trial = 0; trial < 100; ++trial) {
    const double finf = finf_d(rng), a = amp(rng) * finf, p = rate(rng);
    std::vector<ConvergencePoint> pts;
    double r = 0.0;
    const int n = 3 + trial % 4;
    for (int k = 0; k < n; ++k) {
      pts.push_back(pt(r, finf + a * std::exp2(-p * r), 1000 * (k + 1)));
      r += dr(rng);
    }
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto e = richardson_extrapolate(pts);
    EXPECT_NEAR(e.f_inf / finf - 1, 0, 1e-10) << trial;
    EXPECT_NEAR(e.rate, p, 1e-6 * p) << trial;
  }
}

TEST(Richardson, ConstantAndErrors) {
  const auto e = richardson_extrapolate({pt(0, 7e9), pt(1, 7e9), pt(2, 7e9)});
  EXPECT_EQ(e.f_inf, 7e9);
  for (double d : e.deviation) EXPECT_EQ(d, 0.0);
  EXPECT_THROW(richardson_extrapolate({pt(0, 7e9), pt(1, 7.1e9)}), FitError);
  EXPECT_THROW(richardson_extrapolate({pt(0, 7e9), pt(1, 7.1e9), pt(2, 7.0e9)}), FitError);
  EXPECT_THROW(richardson_extrapolate({pt(0, 7e9), pt(0, 7.1e9), pt(2, 7.0e9)}), FitError);
  // diverging differences
  EXPECT_THROW(richardson_extrapolate({pt(0, 7e9), pt(1, 7.01e9), pt(2, 7.05e9)}), FitError);
}

TEST(Richardson, WarnsWhenDofsDoNotGrow) {
  Warnings w;
  richardson_extrapolate({pt(0, 7.6e9, 5000), pt(1, 7.55e9, 4000), pt(2, 7.54e9, 9000)}, &w);
  EXPECT_EQ(w.size(), 1u);
}

TEST(Criterion, ThresholdInclusive) {
  const double finf = 7.5e9;
  const std::vector<ConvergencePoint> pts = {pt(1.0, finf * 1.002), pt(1.5, finf * 1.003), pt(2.0, finf * 0.995)};
  EXPECT_TRUE(check_convergence_criterion(pts, {1.0, 4}, finf).pass);
  EXPECT_NEAR(check_convergence_criterion(pts, {1.0, 4}, finf).deviation, 0.002, 1e-12);
  EXPECT_TRUE(check_convergence_criterion(pts, {1.5, 4}, finf).pass);
  EXPECT_FALSE(check_convergence_criterion(pts, {2.0, 4}, finf).pass);
  EXPECT_THROW(check_convergence_criterion(pts, {1.5, 3}, finf), FitError);
}
