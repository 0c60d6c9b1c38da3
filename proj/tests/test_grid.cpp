#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "pixant/error.hpp"
#include "pixant/grid.hpp"

using namespace pixant;

namespace {

// Reachability by repeated relaxation: a cell joins when any 4-neighbour is
// already in. Independent of the queue-based search in the library.
BitVector reach_oracle(const PixelGrid& g, Cell seed) {
  BitVector in(g.size(), 0);
  if (!g.at(seed.ix, seed.iy)) return in;
  in[g.index(seed.ix, seed.iy)] = 1;
  for (bool changed = true; changed;) {
    changed = false;
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix) {
        if (!g.at(ix, iy) || in[g.index(ix, iy)]) continue;
        const int nb[4][2] = {{ix - 1, iy}, {ix + 1, iy}, {ix, iy - 1}, {ix, iy + 1}};
        for (const auto& n : nb)
          if (g.contains({n[0], n[1]}) && in[g.index(n[0], n[1])]) {
            in[g.index(ix, iy)] = 1;
            changed = true;
            break;
          }
      }
  }
  return in;
}

}  // namespace

TEST(MakeGrid, Minimal) {
  const PixelGrid g = make_grid(1, 1, true);
  EXPECT_EQ(g.bits, BitVector{1});
  EXPECT_EQ(g.feed, (Cell{0, 0}));
}

TEST(MakeGrid, FullEightByEight) {
  const PixelGrid g = make_grid(8, 8, true);
  EXPECT_EQ(g.active_count(), 64u);
  EXPECT_EQ(g.feed, (Cell{4, 0}));
}

TEST(MakeGrid, EmptyThreeByTwo) {
  const PixelGrid g = make_grid(3, 2, false);
  EXPECT_EQ(g.bits, BitVector(6, 0));
  EXPECT_EQ(g.feed, (Cell{1, 0}));
}

TEST(MakeGrid, ZeroDimensionRejected) {
  EXPECT_THROW(make_grid(0, 3, true), std::invalid_argument);
  EXPECT_THROW(make_grid(3, 0, true), std::invalid_argument);
}

TEST(ConnectedComponent, FullGrid) {
  const PixelGrid g = make_grid(3, 3, true);
  EXPECT_EQ(connected_component(g, {1, 1}).active_count(), 9u);
}

TEST(ConnectedComponent, CheckerboardCornersDiagonalsExcluded) {
  PixelGrid g = make_grid(3, 3, false);
  for (int iy = 0; iy < 3; ++iy)
    for (int ix = 0; ix < 3; ++ix) g.set(ix, iy, (ix + iy) % 2 == 0);
  const PixelGrid m = connected_component(g, {0, 0});
  EXPECT_EQ(m.bits, reach_oracle(g, {0, 0}));
  EXPECT_EQ(m.active_count(), 1u);
  EXPECT_TRUE(m.at(0, 0));
}

TEST(ConnectedComponent, InactiveSeed) {
  const PixelGrid g = make_grid(4, 3, false);
  EXPECT_EQ(connected_component(g, {2, 1}).active_count(), 0u);
}

TEST(ConnectedComponent, OutOfBoundsSeed) {
  const PixelGrid g = make_grid(3, 3, true);
  EXPECT_THROW(connected_component(g, {3, 0}), std::invalid_argument);
  EXPECT_THROW(connected_component(g, {0, -1}), std::invalid_argument);
}

TEST(ConnectedComponent, MatchesOracleOnRandomGrids) {
  for (std::uint64_t s = 0; s < 300; ++s) {
    const PixelGrid g = random_grid(1 + static_cast<int>(s % 9), 1 + static_cast<int>(s % 7), 0.6, s);
    const Cell seed{static_cast<int>(s % static_cast<std::uint64_t>(g.nx)), 0};
    const PixelGrid m = connected_component(g, seed);
    ASSERT_EQ(m.bits, reach_oracle(g, seed)) << "seed " << s;
    EXPECT_EQ(m.at(seed.ix, seed.iy), g.at(seed.ix, seed.iy));
    // closed under 4-adjacency within the active set
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix) {
        if (!m.at(ix, iy)) continue;
        const int nb[4][2] = {{ix - 1, iy}, {ix + 1, iy}, {ix, iy - 1}, {ix, iy + 1}};
        for (const auto& n : nb)
          if (g.contains({n[0], n[1]}) && g.at(n[0], n[1])) {
            EXPECT_TRUE(m.at(n[0], n[1]));
          }
      }
  }
}

TEST(RepairFloating, FullGridUnchanged) {
  const PixelGrid g = make_grid(5, 4, true);
  EXPECT_EQ(repair_floating(g), g);
}

TEST(RepairFloating, IsolatedCornerRemoved) {
  PixelGrid g = make_grid(5, 4, false);
  for (int iy = 0; iy < 2; ++iy) g.set(2, iy, true);  // stub from the feed
  g.set(4, 3, true);                                  // island
  const PixelGrid r = repair_floating(g);
  PixelGrid want = g;
  want.set(4, 3, false);
  EXPECT_EQ(r, want);
  EXPECT_EQ(r.bits, reach_oracle(r, r.feed));
}

TEST(RepairFloating, EmptyGridKeepsOnlyFeed) {
  const PixelGrid r = repair_floating(make_grid(6, 5, false));
  EXPECT_EQ(r.active_count(), 1u);
  EXPECT_TRUE(r.at(3, 0));
}

TEST(RepairFloating, PropertiesOnRandomGrids) {
  for (std::uint64_t s = 0; s < 2000; ++s) {
    PixelGrid g = random_grid(1 + static_cast<int>(s % 10), 1 + static_cast<int>((s / 10) % 10),
                              (s % 11) / 10.0, s);
    const PixelGrid r = repair_floating(g);
    ASSERT_EQ(repair_floating(r), r);
    PixelGrid forced = g;
    forced.set(g.feed.ix, g.feed.iy, true);
    ASSERT_EQ(r.bits, reach_oracle(forced, g.feed));
    for (std::size_t i = 0; i < g.size(); ++i)
      if (r.bits[i] && !g.bits[i]) {
        ASSERT_EQ(i, g.index(g.feed.ix, g.feed.iy));
      }
  }
}

TEST(RandomGrid, DensityExtremes) {
  EXPECT_EQ(random_grid(5, 5, 0.0, 3).active_count(), 0u);
  EXPECT_EQ(random_grid(5, 5, 1.0, 3).active_count(), 25u);
}

TEST(RandomGrid, Deterministic) {
  EXPECT_EQ(random_grid(8, 8, 0.5, 7), random_grid(8, 8, 0.5, 7));
  EXPECT_NE(random_grid(8, 8, 0.5, 7), random_grid(8, 8, 0.5, 8));
}

TEST(RandomGrid, InvalidDensity) {
  EXPECT_THROW(random_grid(2, 2, -0.1, 1), std::invalid_argument);
  EXPECT_THROW(random_grid(2, 2, 1.5, 1), std::invalid_argument);
}

TEST(RandomGrid, MeanWithinThreeStandardErrors) {
  for (double d : {0.1, 0.5, 0.8}) {
    const int samples = 400;
    double total = 0.0;
    for (int s = 0; s < samples; ++s) total += random_grid(8, 8, d, static_cast<std::uint64_t>(s)).active_count();
    const double n = samples * 64.0;
    const double se = std::sqrt(d * (1.0 - d) / n);
    EXPECT_NEAR(total / n, d, 3.0 * se) << "density " << d;
  }
}

TEST(Hamming, Basics) {
  const PixelGrid a = random_grid(8, 8, 0.5, 1);
  EXPECT_EQ(hamming(a, a), 0u);
  EXPECT_EQ(hamming(make_grid(8, 8, true), make_grid(8, 8, false)), 64u);
  PixelGrid b = a;
  b.set(3, 5, !b.at(3, 5));
  EXPECT_EQ(hamming(a, b), 1u);
  EXPECT_THROW(hamming(a, make_grid(8, 7, true)), std::invalid_argument);
}

TEST(Mask, RoundTrip) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const PixelGrid g = random_grid(1 + static_cast<int>(s % 9), 1 + static_cast<int>(s % 6), 0.5, s);
    std::istringstream in(mask_text(g));
    EXPECT_EQ(read_mask(in, "m", &g), g);
  }
}

TEST(Mask, OneByOneIsThreeLines) {
  EXPECT_EQ(mask_text(make_grid(1, 1, true)), "P1\n1 1\n1\n");
}

TEST(Mask, RowZeroFirst) {
  PixelGrid g = make_grid(3, 2, false);
  g.set(0, 0, true);
  g.set(2, 1, true);
  EXPECT_EQ(mask_text(g), "P1\n3 2\n1 0 0\n0 0 1\n");
}

TEST(Mask, ParseErrorsCarryLineNumbers) {
  struct Case {
    const char* text;
    int line;
  };
  const Case cases[] = {
      {"P4\n1 1\n1\n", 1},          {"P1\n2\n1 1\n", 2},       {"P1\n2 2\n1 1\n1\n", 4},
      {"P1\n2 1\n1 2\n", 3},        {"P1\n1 1\n1\n0\n", 4},    {"P1\n", 2},
      {"P1\n# c\n2 1\n1 1 1\n", 4},
  };
  for (const auto& c : cases) {
    std::istringstream in(c.text);
    try {
      read_mask(in, "mask");
      ADD_FAILURE() << "accepted: " << c.text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), c.line) << c.text << " -> " << e.what();
    }
  }
}

TEST(Mask, UnwritablePathNamesPath) {
  try {
    export_mask(make_grid(2, 2, true), "/nonexistent-dir/x.pbm");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/x.pbm"), std::string::npos);
  }
}

TEST(BitsHex, LittleEndianWithinRows) {
  PixelGrid g = make_grid(10, 2, false);
  g.set(0, 0, true);  // byte 0 bit 0
  g.set(9, 0, true);  // byte 1 bit 1
  g.set(3, 1, true);
  EXPECT_EQ(bits_hex(g.bits, 10, 2), "01020800");
  EXPECT_EQ(bits_from_hex("01020800", 10, 2), g.bits);
  EXPECT_THROW(bits_from_hex("01060800", 10, 2), std::invalid_argument);  // padding bit
}

TEST(BitsHex, RoundTripRandom) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const int nx = 1 + static_cast<int>(s % 17), ny = 1 + static_cast<int>(s % 5);
    const BitVector b = random_bits(static_cast<std::size_t>(nx * ny), 0.5, s);
    EXPECT_EQ(bits_from_hex(bits_hex(b, nx, ny), nx, ny), b);
  }
}

TEST(MirrorX, Involution) {
  const PixelGrid g = random_grid(7, 4, 0.5, 9);
  EXPECT_EQ(mirror_x(mirror_x(g)), g);
  EXPECT_EQ(mirror_x(g).at(6, 2), g.at(0, 2));
}
