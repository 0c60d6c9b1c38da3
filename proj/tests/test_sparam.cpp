#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "pixant/emcore.hpp"
#include "pixant/error.hpp"
#include "pixant/rng.hpp"
#include "pixant/sparam.hpp"
#include "pixant/touchstone.hpp"

using namespace pixant;

namespace {

SParamSet flat_set(std::size_t n, cplx s11, cplx s21) {
  SParamSet s;
  s.freqs = linear_grid(Band{}, n);
  for (std::size_t k = 0; k < n; ++k) s.s.push_back(SMatrix{{{s11, s21}, {s21, s11}}});
  return s;
}

double round9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

SParamSet random_set(std::uint64_t seed) {
  Rng rng(seed);
  SParamSet s;
  const std::size_t n = 1 + static_cast<std::size_t>(uniform01(rng) * 40);
  double f = 1e6 + uniform01(rng) * 1e9;
  for (std::size_t k = 0; k < n; ++k) {
    f += 1.0 + uniform01(rng) * 1e8;
    s.freqs.push_back(f);
    SMatrix m{};
    for (auto& row : m)
      for (auto& v : row) {
        const double scale = std::pow(10.0, -6.0 + 7.0 * uniform01(rng));
        v = cplx((uniform01(rng) - 0.5) * scale, (uniform01(rng) - 0.5) * scale);
      }
    s.s.push_back(m);
  }
  s.z0 = uniform01(rng) < 0.5 ? 50.0 : 1.0 + uniform01(rng) * 200.0;
  return s;
}

}  // namespace

TEST(DbMag, Examples) {
  EXPECT_DOUBLE_EQ(db_mag(1.0), 0.0);
  EXPECT_NEAR(db_mag(0.5), -6.0206, 5e-5);
  EXPECT_NEAR(db_mag(10.0), 20.0, 1e-12);
  EXPECT_EQ(db_mag(0.0), kDbFloor);
  EXPECT_EQ(db_mag(1e-300), kDbFloor);
}

TEST(LinearGrid, InclusiveEndpoints) {
  const auto f = linear_grid(Band{}, 251);
  ASSERT_EQ(f.size(), 251u);
  EXPECT_EQ(f.front(), 3e9);
  EXPECT_EQ(f.back(), 8e9);
  EXPECT_NEAR(f[1] - f[0], 20e6, 1e-3);
}

TEST(ResonanceMin, FlatSweepTakesFirstFrequency) {
  const SParamSet s = flat_set(11, 1.0, 0.0);
  const Resonance r = resonance_min(s, 1);
  EXPECT_EQ(r.freq, s.freqs.front());
  EXPECT_EQ(r.db, 0.0);
}

TEST(ResonanceMin, InjectedDip) {
  SParamSet s = flat_set(51, 0.9, 0.1);
  s.s[17][1][1] = 0.01;
  s.s[30][0][0] = 0.02;
  EXPECT_EQ(resonance_min(s, 1).freq, s.freqs[30]);
  EXPECT_EQ(resonance_min(s, 2).index, 17u);
  EXPECT_THROW(resonance_min(SParamSet{}, 1), std::invalid_argument);
}

TEST(SparamAt, InterpolatesAndRejectsOutside) {
  SParamSet s = flat_set(2, 0.0, 0.0);
  s.s[0][0][0] = 0.2;
  s.s[1][0][0] = 0.6;
  EXPECT_NEAR(std::abs(sparam_at(s, 0, 0, 5.5e9)), 0.4, 1e-12);
  EXPECT_THROW(sparam_at(s, 0, 0, 2e9), std::invalid_argument);
}

TEST(SanityCheck, IdentityLikePasses) {
  const SanityReport r = sanity_check(flat_set(5, 0.0, 1.0), true);
  EXPECT_TRUE(r.passivity_ok);
  EXPECT_TRUE(r.reciprocity_ok);
  EXPECT_NEAR(r.passivity_max, 1.0, 1e-15);
}

TEST(SanityCheck, ExcessTransmissionFlagged) {
  SParamSet s = flat_set(5, 0.0, 0.5);
  s.s[3][1][0] = 1.2;
  const SanityReport r = sanity_check(s, true);
  EXPECT_FALSE(r.passivity_ok);
  EXPECT_FALSE(r.reciprocity_ok);  // S21 != S12 there as well
  EXPECT_NEAR(r.reciprocity_max, 0.7, 1e-12);
}

TEST(SanityCheck, LossyLimitIsTighter) {
  const SParamSet s = flat_set(3, 0.0, std::sqrt(1.01));
  EXPECT_TRUE(sanity_check(s, true).passivity_ok);
  EXPECT_FALSE(sanity_check(s, false).passivity_ok);
}

TEST(Touchstone, WriteFormat) {
  SParamSet s;
  s.freqs = {5.4e9};
  s.s = {SMatrix{{{cplx(0.1, -0.2), cplx(0.3, 0.4)}, {cplx(0.5, 0.6), cplx(-0.7, 0.8)}}}};
  std::ostringstream out;
  touchstone_write(out, s);
  EXPECT_EQ(out.str(),
            "! pixant two-port scattering parameters\n"
            "# HZ S RI R 50\n"
            "5.4e+09 0.1 -0.2 0.5 0.6 0.3 0.4 -0.7 0.8\n");
}

TEST(Touchstone, RoundTripThousandRandomSets) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const SParamSet s = random_set(seed);
    std::stringstream io;
    touchstone_write(io, s);
    const SParamSet r = touchstone_read(io, "rt");
    ASSERT_EQ(r.size(), s.size());
    ASSERT_EQ(r.z0, round9(s.z0));
    for (std::size_t k = 0; k < s.size(); ++k) {
      ASSERT_EQ(r.freqs[k], round9(s.freqs[k]));
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          ASSERT_EQ(r.s[k][a][b].real(), round9(s.s[k][a][b].real())) << seed;
          ASSERT_EQ(r.s[k][a][b].imag(), round9(s.s[k][a][b].imag())) << seed;
        }
    }
    // A second pass is exact: written values are already 9-digit numbers.
    std::stringstream io2;
    touchstone_write(io2, r);
    const SParamSet r2 = touchstone_read(io2, "rt2");
    ASSERT_EQ(r2.freqs, r.freqs);
    ASSERT_EQ(r2.s, r.s);
  }
}

TEST(Touchstone, GhzUnitScales) {
  std::istringstream in("# GHZ S RI R 50\n5.4 0 0 1 0 1 0 0 0\n");
  const SParamSet s = touchstone_read(in);
  EXPECT_EQ(s.freqs.front(), 5.4e9);
}

TEST(Touchstone, Version1Defaults) {
  // No option line: GHZ, MA, R 50.
  std::istringstream in("! comment\n1.5 0.5 90 1 0 1 0 0.5 -90\n");
  const SParamSet s = touchstone_read(in);
  EXPECT_EQ(s.freqs.front(), 1.5e9);
  EXPECT_EQ(s.z0, 50.0);
  EXPECT_NEAR(s.s[0][0][0].imag(), 0.5, 1e-15);
  EXPECT_NEAR(s.s[0][1][1].imag(), -0.5, 1e-15);
}

TEST(Touchstone, DbFormat) {
  std::istringstream in("# MHZ S DB R 75\n5400 -20 0 -6.0206 180 0 0 0 0 ! trailing comment\n");
  const SParamSet s = touchstone_read(in);
  EXPECT_EQ(s.freqs.front(), 5.4e9);
  EXPECT_EQ(s.z0, 75.0);
  EXPECT_NEAR(std::abs(s.s[0][0][0]), 0.1, 1e-12);
  EXPECT_NEAR(s.s[0][1][0].real(), -0.5, 1e-5);
}

TEST(Touchstone, MalformedCorpusRejectedWithLineNumbers) {
  std::string twelve = "# HZ S RI R 50\n";
  for (int k = 0; k < 10; ++k) twelve += std::to_string(1e9 + k) + " 0 0 0 0 0 0 0 0\n";
  twelve += "2e9 0 0 0 0 0 0 0\n";  // line 12: one column short
  struct Case {
    std::string text;
    int line;
  };
  const std::vector<Case> corpus = {
      {twelve, 12},
      {"# HZ S RI R 50\n1 0 0 0 0 0 0 0 0 0\n", 2},               // extra column
      {"# HZ S RI R 50\n2 0 0 0 0 0 0 0 0\n1 0 0 0 0 0 0 0 0\n", 3},  // descending
      {"# HZ S RI R 50\n1 0 0 0 0 0 0 0 0\n1 0 0 0 0 0 0 0 0\n", 3},  // repeated frequency
      {"# HZ S XX R 50\n", 1},                                        // unknown token
      {"# HZ Y RI R 50\n1 0 0 0 0 0 0 0 0\n", 1},                     // not S parameters
      {"# HZ S RI R\n1 0 0 0 0 0 0 0 0\n", 1},                        // R without value
      {"# HZ S RI R -5\n1 0 0 0 0 0 0 0 0\n", 1},                     // negative impedance
      {"# HZ S RI R 50\n# HZ S RI R 50\n", 2},                        // duplicate option line
      {"# HZ S RI R 50\n1 0 0 0 0 0 0 0 0\n# GHZ S RI R 50\n", 3},    // option line after data
      {"# HZ S RI R 50\n1 0 0 0 0 x 0 0 0\n", 2},                     // non-numeric value
      {"# HZ S RI R 50\n-1 0 0 0 0 0 0 0 0\n", 2},                    // negative frequency
      {"! only a comment\n", 2},                                      // no data
      {"# HZ S RI R 50\n1 0 0 0 0 0 0 0 nan\n", 2},                   // non-finite value
  };
  ASSERT_GE(corpus.size(), 10u);
  for (const auto& c : corpus) {
    std::istringstream in(c.text);
    try {
      touchstone_read(in, "bad.s2p");
      ADD_FAILURE() << "accepted:\n" << c.text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), c.line) << e.what();
      EXPECT_NE(std::string(e.what()).find("bad.s2p:" + std::to_string(c.line) + ":"), std::string::npos);
    }
  }
}

TEST(Touchstone, MissingFileIsIoError) {
  EXPECT_THROW(touchstone_read(std::string("/nonexistent/x.s2p")), IoError);
}

TEST(ExtractSparams, RejectsBadRunSets) {
  const PixelGrid g = make_grid(1, 1, true);
  const Scene s = build_scene(g, g, 4.4e-3, MaterialStack{}, 2);
  const TimeSeries r = run_fdtd(s, 1, 20000, Pulse{});
  ASSERT_TRUE(r.converged);
  EXPECT_THROW(extract_sparams({r}, Band{}, 11), std::invalid_argument);
  EXPECT_THROW(extract_sparams({r, r}, Band{}, 11), std::invalid_argument);
  EXPECT_THROW(extract_sparams({r, mirror_run(r)}, Band{0.2e9, 8e9}, 11), std::invalid_argument);
  EXPECT_THROW(extract_sparams({r, mirror_run(r)}, Band{3e9, 30e9}, 11), std::invalid_argument);
  const TimeSeries short_run = run_fdtd(s, 1, 200, Pulse{});
  EXPECT_THROW(extract_sparams({short_run, mirror_run(short_run)}, Band{}, 11), AccuracyError);
}

TEST(ExtractSparams, SweepRefinementStable) {
  const PixelGrid g = repair_floating(random_grid(5, 4, 0.7, 11));
  const Scene s = build_scene(g, g, 4.4e-3, MaterialStack{}, 2);
  const TimeSeries r = run_fdtd(s, 1, 60000, Pulse{});
  const SParamSet coarse = extract_sparams({r, mirror_run(r)}, Band{}, 251);
  const SParamSet fine = extract_sparams({r, mirror_run(r)}, Band{}, 501);
  EXPECT_LT(std::abs(s11_db(coarse, 5.4e9) - s11_db(fine, 5.4e9)), 0.1);
}
