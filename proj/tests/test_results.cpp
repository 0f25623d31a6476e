#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "cqedtk/results.hpp"

using namespace cqedtk;
using namespace cqedtk::results;

TEST(Table, DelimitersAndWhitespace) {
  const auto a = read_table("a, b ,c\n1,2,3\n\n4 ,5, 6  \n\n");
  ASSERT_EQ(a.headers, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(a.rows.size(), 2u);
  EXPECT_EQ(a.rows[1][2], 6.0);
  const auto b = read_table("x;y\n1.5;-2e-3\n");
  EXPECT_EQ(b.rows[0][1], -2e-3);
  const auto c = read_table("x\ty\n1\t2\n");
  EXPECT_EQ(c.rows[0][1], 2.0);
  const auto d = read_table("# comment\nx y\n  1   2\r\n");
  EXPECT_EQ(d.rows[0][0], 1.0);
  // Palace pads rows with a trailing delimiter.
  const auto e = read_table("x, y,\n1, 2,\n");
  EXPECT_EQ(e.headers.size(), 2u);
}

TEST(Table, RejectsMalformed) {
  EXPECT_THROW(read_table(""), ParseError);
  EXPECT_THROW(read_table("a,b\n1\n"), ParseError);
  EXPECT_THROW(read_table("a,b\n1,2,3\n"), ParseError);
  // Locale-independent: a decimal comma is not a number.
  EXPECT_THROW(read_table("a;b\n1,5;2\n"), ParseError);
}

TEST(Table, InfinityParses) {
  const auto t = read_table("a\ninf\n");
  EXPECT_TRUE(std::isinf(t.rows[0][0]));
}

TEST(CapMatrix, TwoByTwoFemtofarads) {
  const auto m = parse_cap_csv("i, C[i][1] (fF), C[i][2] (fF)\n1, 100, -5\n2, -5, 60\n", {"A", "B"});
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m.C(0, 0), 100e-15);
  EXPECT_DOUBLE_EQ(m.C(0, 1), -5e-15);
  EXPECT_EQ(m.C(0, 1), m.C(1, 0));
  EXPECT_DOUBLE_EQ(m.C(1, 1), 60e-15);
  EXPECT_EQ(m.terminal_names[1], "B");
}

TEST(CapMatrix, FaradsAndSymmetrization) {
  const auto m = parse_cap_csv("C[i][1] (F), C[i][2] (F)\n1e-13, -5e-15\n-5.0000000001e-15, 6e-14\n");
  EXPECT_EQ(m.C(0, 1), m.C(1, 0));
  EXPECT_NEAR(m.C(0, 1), -5.00000000005e-15, 1e-27);
}

TEST(CapMatrix, SignConventionError) {
  EXPECT_THROW(parse_cap_csv("i, C1 (fF), C2 (fF)\n1, 100, 5\n2, 5, 60\n"), ParseError);
}

TEST(CapMatrix, AsymmetryError) {
  EXPECT_THROW(parse_cap_csv("i, C1 (fF), C2 (fF)\n1, 100, -5\n2, -6, 60\n"), ParseError);
}

TEST(CapMatrix, SingleTerminal) {
  const auto m = parse_cap_csv("i, C[i][1] (pF)\n1, 0.08\n");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_DOUBLE_EQ(m.C(0, 0), 80e-15);
}

TEST(CapMatrix, MalformedHeader) {
  EXPECT_THROW(parse_cap_csv("i, C1 (furlongs)\n1, 1\n"), ParseError);
  EXPECT_THROW(parse_cap_csv("i, C1, C2\n1, 1, 0\n"), ParseError);
}

TEST(Mutual, HandExample) {
  const auto m = parse_cap_csv("i, C1 (fF), C2 (fF)\n1, 100, -5\n2, -5, 60\n");
  const auto mc = maxwell_to_mutual(m);
  EXPECT_DOUBLE_EQ(mc.mutual(0, 1), 5e-15);
  EXPECT_DOUBLE_EQ(mc.mutual(1, 0), 5e-15);
  EXPECT_EQ(mc.mutual(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(mc.to_ground(0), 95e-15);
  EXPECT_DOUBLE_EQ(mc.to_ground(1), 55e-15);
}

TEST(Mutual, Diagonal) {
  const auto m = parse_cap_csv("i, C1 (fF), C2 (fF)\n1, 10, 0\n2, 0, 20\n");
  const auto mc = maxwell_to_mutual(m);
  EXPECT_EQ(mc.mutual.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(mc.to_ground(1), 20e-15);
}

TEST(Mutual, NegativeSelfError) {
  const auto m = parse_cap_csv("i, C1 (fF), C2 (fF)\n1, 1, -2\n2, -2, 1\n");
  EXPECT_THROW(maxwell_to_mutual(m), ParseError);
}

TEST(Mutual, ReconstructionExact) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> off(0, 50), ground(0, 200), size(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = size(rng);
    MaxwellCapMatrix m;
    m.C = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      m.terminal_names.push_back(std::to_string(i));
      for (int j = i + 1; j < n; ++j) m.C(i, j) = m.C(j, i) = -off(rng);
    }
    for (int i = 0; i < n; ++i) m.C(i, i) = 1 + ground(rng) - m.C.row(i).sum();
    m.validate();
    EXPECT_EQ(mutual_to_maxwell(maxwell_to_mutual(m)), m.C);
  }
}

namespace {
const char* eig3 =
    "m, Re{f} (GHz), Im{f} (GHz), Q, Error (Bkwd.), Error (Abs.)\n"
    "1, 5.1, 1e-5, 2.55e5, 1e-12, 1e-12\n"
    "2, 7.19, 2e-5, 1.8e5, 1e-12, 1e-12\n"
    "3, 12.0, 1e-4, 6e4, 1e-12, 1e-12\n";
const char* epr3 =
    "m, p[1]\n"
    "1, 0.97\n"
    "2, 0.012\n"
    "3, 0.0000005\n";
}  // namespace

TEST(Modes, JoinEigAndEpr) {
  const auto modes = parse_modes(eig3, epr3);
  ASSERT_EQ(modes.size(), 3u);
  EXPECT_DOUBLE_EQ(modes[1].frequency, 7.19e9);
  EXPECT_DOUBLE_EQ(modes[1].q, 1.8e5);
  ASSERT_EQ(modes[0].participation.size(), 1u);
  EXPECT_DOUBLE_EQ(modes[0].participation[0], 0.97);
  EXPECT_EQ(modes[0].sign[0], 1);
}

TEST(Modes, MissingEprMeansBare) {
  const auto modes = parse_modes(eig3);
  ASSERT_EQ(modes.size(), 3u);
  for (const auto& m : modes) EXPECT_TRUE(m.participation.empty());
}

TEST(Modes, ParticipationOutOfRange) {
  EXPECT_THROW(parse_modes(eig3, std::string_view("m, p[1]\n1, 1.2\n2, 0\n3, 0\n")), ParseError);
  EXPECT_THROW(parse_modes(eig3, std::string_view("m, p[1]\n1, -0.01\n2, 0\n3, 0\n")), ParseError);
  EXPECT_THROW(parse_modes(eig3, std::string_view("m, p[1], p[2]\n1, 0.7, 0.6\n2, 0, 0\n3, 0, 0\n")), ParseError);
}

TEST(Modes, ClampsWithinTolerance) {
  const auto modes = parse_modes(eig3, std::string_view("m, p[1]\n1, 1.0000005\n2, -0.0000005\n3, 0\n"));
  EXPECT_EQ(modes[0].participation[0], 1.0);
  EXPECT_EQ(modes[1].participation[0], 0.0);
}

TEST(Modes, IndexMismatch) {
  EXPECT_THROW(parse_modes(eig3, std::string_view("m, p[1]\n1, 0.1\n2, 0.1\n")), ParseError);
  EXPECT_THROW(parse_modes(eig3, std::string_view("m, p[1]\n1, 0.1\n2, 0.1\n4, 0.1\n")), ParseError);
}

TEST(Modes, SignsRead) {
  const auto modes =
      parse_modes(eig3, std::string_view("m, p[1], s[1], p[2], s[2]\n1, 0.5, 1, 0.4, -1\n2, 0, 1, 0, 1\n3, 0, 1, 0, 1\n"));
  EXPECT_EQ(modes[0].sign, (std::vector<int>{1, -1}));
}

TEST(Modes, MhzUnitAndHeaderCase) {
  const auto modes = parse_eig_csv("MODE, FREQ (MHz), q\n1, 7190, 1e4\n");
  EXPECT_DOUBLE_EQ(modes[0].frequency, 7.19e9);
}

TEST(FilterModes, Window) {
  const auto modes = parse_modes("m, Re{f} (GHz), Q\n1, 5.1, 1e5\n2, 7.19, 1e5\n3, 7.29, 1e5\n4, 12.0, 1e5\n");
  const auto kept = filter_modes(modes, 7e9, 8e9);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].index, 2);
  EXPECT_EQ(kept[1].index, 3);
  EXPECT_EQ(filter_modes(modes, 0, 1e12).size(), 4u);
  EXPECT_TRUE(filter_modes(modes, 1e9, 2e9).empty());
  EXPECT_EQ(filter_modes(modes, 0, 1e12, 2e5).size(), 0u);
}

TEST(FilterModes, Idempotent) {
  const auto modes = parse_modes(eig3, epr3);
  const auto once = filter_modes(modes, 6e9, 13e9, 1e5);
  const auto twice = filter_modes(once, 6e9, 13e9, 1e5);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].index, twice[i].index);
}

TEST(SParams, DbDegRow) {
  const auto s = parse_sparams_csv("f (GHz), |S[2][1]| (dB), arg(S[2][1]) (deg.)\n7.2, -0.5, -30\n");
  ASSERT_EQ(s.frequencies.size(), 1u);
  EXPECT_DOUBLE_EQ(s.frequencies[0], 7.2e9);
  const std::complex<double> want = std::pow(10.0, -0.5 / 20) * std::exp(std::complex<double>(0, -std::numbers::pi / 6));
  EXPECT_NEAR(std::abs(s.at(2, 1)[0] - want), 0.0, 1e-15);
}

TEST(SParams, DualEncodingAgrees) {
  std::string db = "f (GHz), |S[1][1]| (dB), arg(S[1][1]) (deg.), |S[2][1]| (dB), arg(S[2][1]) (deg.)\n";
  std::string ri = "f (GHz), Re{S[1][1]}, Im{S[1][1]}, Re{S[2][1]}, Im{S[2][1]}\n";
  for (int k = 0; k < 20; ++k) {
    const double f = 7.0 + 0.01 * k;
    const std::complex<double> s11 = std::polar(0.1 + 0.01 * k, 0.3 * k - 2.0);
    const std::complex<double> s21 = std::polar(0.99 - 0.02 * k, -0.2 * k);
    db += fmt::format("{:.17g}, {:.17g}, {:.17g}, {:.17g}, {:.17g}\n", f, 20 * std::log10(std::abs(s11)),
                      std::arg(s11) * 180 / std::numbers::pi, 20 * std::log10(std::abs(s21)),
                      std::arg(s21) * 180 / std::numbers::pi);
    ri += fmt::format("{:.17g}, {:.17g}, {:.17g}, {:.17g}, {:.17g}\n", f, s11.real(), s11.imag(), s21.real(), s21.imag());
  }
  const auto a = parse_sparams_csv(db), b = parse_sparams_csv(ri);
  EXPECT_EQ(a.frequencies, b.frequencies);
  ASSERT_EQ(a.s.size(), b.s.size());
  for (const auto& [pair, v] : a.s)
    for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(std::abs(v[k] - b.at(pair.first, pair.second)[k]), 0, 1e-14);
}

TEST(SParams, NonMonotoneFrequency) {
  EXPECT_THROW(parse_sparams_csv("f (GHz), Re{S[2][1]}, Im{S[2][1]}\n7.2, 1, 0\n7.1, 1, 0\n7.3, 1, 0\n"), ParseError);
}

TEST(SParams, UnknownConvention) {
  EXPECT_THROW(parse_sparams_csv("f (GHz), S21 magnitude\n7.2, 1\n"), ParseError);
  EXPECT_THROW(parse_sparams_csv("f (GHz), |S[2][1]| (dB)\n7.2, 1\n"), ParseError);
}

TEST(SParams, FlagsActiveAndOutOfBand) {
  Warnings w;
  parse_sparams_csv("f (GHz), Re{S[2][1]}, Im{S[2][1]}\n7.2, 1.1, 0\n7.3, 0.5, 0\n", &w, std::pair{7.25e9, 8e9});
  ASSERT_EQ(w.size(), 2u);
}

TEST(Dofs, FindsNestedKey) {
  const auto doc = nlohmann::json::parse(R"({"Problem": {"Type": "Eigenmode", "DegreesOfFreedom": 123456}})");
  EXPECT_EQ(find_dofs(doc).value(), 123456);
  EXPECT_FALSE(find_dofs(nlohmann::json::parse(R"({"a": 1})")).has_value());
}
