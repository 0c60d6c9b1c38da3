#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "pixant/emcore.hpp"
#include "pixant/sparam.hpp"

using namespace pixant;

namespace {

constexpr double kC0 = 299792458.0;

std::vector<double> graded_dz(double h, int nsub, double d, int air, int pml) {
  std::vector<double> dz(static_cast<std::size_t>(nsub), h / nsub);
  double next = h / nsub;
  for (int a = 0; a < air; ++a) {
    next = std::min(next * 1.3, d);
    dz.push_back(next);
  }
  for (int a = 0; a < pml; ++a) dz.push_back(dz.back());
  return dz;
}

// Empty grounded substrate with two lumped ports, each terminated by a
// co-located resistor.
Scene loaded_ports_scene(double r_load) {
  const double d = 0.5e-3;
  Scene s = Scene::blank(40, 40, d, d, graded_dz(0.787e-3, 3, d, 10, 8));
  s.set_substrate(3, 2.2, 0.0);
  for (int p = 0; p < 2; ++p) {
    Port pt;
    pt.index = p + 1;
    pt.i = p == 0 ? 15 : 25;
    pt.j = 20;
    pt.k0 = 0;
    pt.k1 = 3;
    s.ports.push_back(pt);
    s.loads.push_back(LumpedLoad{pt.i, pt.j, 0, 3, r_load});
  }
  s.validate();
  return s;
}

PixelGrid small_patch(std::uint64_t seed) {
  return repair_floating(random_grid(3, 3, 0.7, seed));
}

}  // namespace

TEST(CourantDt, UnitCube) {
  EXPECT_NEAR(courant_dt(1e-3, 1e-3, 1e-3), 0.99 / (kC0 * std::sqrt(3.0) * 1000.0), 1e-27);
}

TEST(CourantDt, HalvingCellsHalvesStep) {
  EXPECT_NEAR(courant_dt(0.5e-3, 0.5e-3, 0.5e-3), 0.5 * courant_dt(1e-3, 1e-3, 1e-3), 1e-27);
}

TEST(CourantDt, AnisotropicCells) {
  const double expected = 0.99 / (kC0 * std::sqrt(1.0 / 0.25e-6 + 1.0 / 1e-6 + 1.0 / 0.0625e-6));
  EXPECT_NEAR(courant_dt(0.5e-3, 1e-3, 0.25e-3), expected, 1e-27);
  EXPECT_THROW(courant_dt(0.0, 1e-3, 1e-3), std::invalid_argument);
}

TEST(BuildScene, StructuralAccounting) {
  const PixelGrid g = make_grid(1, 1, true);
  const Scene s = build_scene(g, g, 10e-3, MaterialStack{}, 2);
  ASSERT_EQ(s.ports.size(), 2u);
  EXPECT_EQ(s.feed_strips, 2);
  // Independent rasterization: each element is the union of a 2x2-cell pixel
  // and a 2x2-cell strip directly below it, a 2x4 cell rectangle with
  // 2*5 x-directed and 3*4 y-directed edges.
  EXPECT_EQ(s.pec_edge_count(), 2u * (2 * 5 + 3 * 4));
  const std::string audit = scene_audit(s);
  EXPECT_NE(audit.find("metal_pixels 2\n"), std::string::npos);
  EXPECT_NE(audit.find("feed_strips 2\n"), std::string::npos);
  EXPECT_NE(audit.find("ground_planes 1\n"), std::string::npos);
}

TEST(BuildScene, DeterministicAudit) {
  const PixelGrid a = small_patch(3), b = small_patch(4);
  EXPECT_EQ(scene_audit(build_scene(a, b, 2e-3, MaterialStack{}, 2)),
            scene_audit(build_scene(a, b, 2e-3, MaterialStack{}, 2)));
}

TEST(BuildScene, RejectsUnrepairedGrid) {
  PixelGrid g = make_grid(4, 4, false);
  g.set(2, 0, true);
  g.set(0, 3, true);  // floating
  const PixelGrid ok = repair_floating(g);
  EXPECT_THROW(build_scene(g, ok, 1e-3, MaterialStack{}, 2), std::invalid_argument);
  EXPECT_THROW(build_scene(ok, ok, 1e-3, MaterialStack{}, 1), std::invalid_argument);
  EXPECT_THROW(build_scene(ok, ok, -1e-3, MaterialStack{}, 2), std::invalid_argument);
}

// Geometry audit at zero spacing: rebuild the metal cell set from the lattice
// edges and compare it with a rasterization computed here from the layout
// rules (air margin, absorbing layer, feed strip length).
TEST(BuildScene, ZeroSpacingGeometryAudit) {
  const PixelGrid g = make_grid(8, 8, true);
  const int r = 2;
  const LatticeSpec lat{};
  const Scene s = build_scene(g, g, 0.0, MaterialStack{}, r, lat);
  const int k = lat.substrate_cells;
  const int p = lat.boundary.pml_cells, air = lat.air_cells, lf = lat.feed_length_pixels * r;

  std::set<std::pair<int, int>> from_lattice;
  for (int i = 0; i < s.cells_x; ++i)
    for (int j = 0; j < s.cells_y; ++j)
      if (s.pec_x[s.node(i, j, k)] && s.pec_x[s.node(i, j + 1, k)] && s.pec_y[s.node(i, j, k)] &&
          s.pec_y[s.node(i + 1, j, k)])
        from_lattice.insert({i, j});

  std::set<std::pair<int, int>> expected, a_cells, b_cells;
  const int xa = p + air, xb = xa + 8 * r, y0 = p + air + lf;
  for (int i = 0; i < 8 * r; ++i)
    for (int j = 0; j < 8 * r; ++j) {
      a_cells.insert({xa + i, y0 + j});
      b_cells.insert({xb + i, y0 + j});
    }
  for (int e = 0; e < 2; ++e) {
    const int fx = (e == 0 ? xa : xb) + 4 * r - (e == 0 ? 0 : r);  // feed pixel 4, mirrored to 3 for B
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < lf; ++j) expected.insert({fx + i, p + air + j});
  }
  expected.insert(a_cells.begin(), a_cells.end());
  expected.insert(b_cells.begin(), b_cells.end());
  EXPECT_EQ(from_lattice, expected);

  // Adjacent on neighbouring cells, no overlap.
  int a_max = 0, b_min = 1 << 30;
  for (const auto& c : a_cells) a_max = std::max(a_max, c.first);
  for (const auto& c : b_cells) b_min = std::min(b_min, c.first);
  EXPECT_EQ(b_min, a_max + 1);
  for (const auto& c : a_cells) EXPECT_EQ(b_cells.count(c), 0u);
}

TEST(FieldEnergy, ZeroFields) {
  const PixelGrid g = make_grid(1, 1, true);
  const Scene s = build_scene(g, g, 4e-3, MaterialStack{}, 2);
  EXPECT_EQ(total_field_energy(s, FieldState::zeros(s)), 0.0);
}

TEST(FieldEnergy, QuadraticScaling) {
  const PixelGrid g = make_grid(1, 1, true);
  const Scene s = build_scene(g, g, 4e-3, MaterialStack{}, 2);
  FieldState f = FieldState::zeros(s);
  Rng rng(5);
  for (auto* c : {&f.ex, &f.ey, &f.ez, &f.hx, &f.hy, &f.hz})
    for (auto& x : *c) x = uniform01(rng) - 0.5;
  const double w1 = total_field_energy(s, f);
  for (auto* c : {&f.ex, &f.ey, &f.ez, &f.hx, &f.hy, &f.hz})
    for (auto& x : *c) x *= 2.0;
  EXPECT_GT(w1, 0.0);
  EXPECT_NEAR(total_field_energy(s, f), 4.0 * w1, 1e-12 * w1);
}

TEST(FieldEnergy, SingleEdgeClosedForm) {
  const PixelGrid g = make_grid(1, 1, true);
  const Scene s = build_scene(g, g, 4e-3, MaterialStack{}, 2);
  FieldState f = FieldState::zeros(s);
  const int k = s.substrate_cells + 2;  // in air
  const int i = s.cells_x / 2, j = s.cells_y / 2;
  f.ez[s.node(i, j, k)] = 3.0;
  const double eps0 = 1.0 / (4e-7 * std::numbers::pi * 1.00000000055 * kC0 * kC0);
  const double expected = 0.5 * eps0 * 9.0 * s.dx * s.dy * s.dz[static_cast<std::size_t>(k)];
  EXPECT_NEAR(total_field_energy(s, f), expected, 1e-6 * expected);
}

TEST(RunFdtd, MatchedLoadReflectsLittle) {
  const Scene s = loaded_ports_scene(50.0);
  const TimeSeries r1 = run_fdtd(s, 1, 40000, Pulse{});
  const TimeSeries r2 = run_fdtd(s, 2, 40000, Pulse{});
  ASSERT_TRUE(r1.converged);
  const SParamSet sp = extract_sparams({r1, r2}, Band{}, 251);
  double worst = 0.0;
  for (const auto& m : sp.s) worst = std::max({worst, std::abs(m[0][0]), std::abs(m[1][1])});
  EXPECT_LE(worst, 0.05);
}

TEST(RunFdtd, OpenGapReflectsFully) {
  // Sanity counterpart: a 1 Mohm termination reflects almost everything.
  const Scene s = loaded_ports_scene(1e6);
  const TimeSeries r1 = run_fdtd(s, 1, 40000, Pulse{});
  const TimeSeries r2 = run_fdtd(s, 2, 40000, Pulse{});
  const SParamSet sp = extract_sparams({r1, r2}, Band{}, 51);
  for (const auto& m : sp.s) EXPECT_GT(std::abs(m[0][0]), 0.9);
}

TEST(RunFdtd, SampleContract) {
  const PixelGrid g = small_patch(1);
  const Scene s = build_scene(g, g, 2.2e-3, MaterialStack{}, 2);
  const TimeSeries r = run_fdtd(s, 1, 300, Pulse{});
  EXPECT_EQ(r.steps, 300u);
  for (std::size_t p = 0; p < 2; ++p) {
    EXPECT_EQ(r.v[p].size(), r.steps);
    EXPECT_EQ(r.i[p].size(), r.steps);
  }
  EXPECT_EQ(r.source.size(), r.steps);
  EXPECT_THROW(run_fdtd(s, 3, 10, Pulse{}), std::invalid_argument);
  EXPECT_THROW(run_fdtd(s, 1, 0, Pulse{}), std::invalid_argument);
}

TEST(RunFdtd, BitReproducible) {
  const Scene s = build_scene(small_patch(1), small_patch(2), 2.2e-3, MaterialStack{}, 2);
  RunOptions o;
  o.stop_on_decay = false;
  const TimeSeries a = run_fdtd(s, 1, 1500, Pulse{}, o);
  const TimeSeries b = run_fdtd(s, 1, 1500, Pulse{}, o);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.i, b.i);
}

TEST(RunFdtd, MirrorSymmetry) {
  const Scene s = build_scene(small_patch(1), small_patch(2), 2.2e-3, MaterialStack{}, 2);
  const Scene m = mirror_scene(s);
  RunOptions o;
  o.stop_on_decay = false;
  const TimeSeries a = run_fdtd(s, 1, 2500, Pulse{}, o);
  const TimeSeries b = run_fdtd(m, 2, 2500, Pulse{}, o);
  for (std::size_t p = 0; p < 2; ++p) {
    double peak = 0.0, diff = 0.0;
    for (std::size_t n = 0; n < a.steps; ++n) {
      peak = std::max(peak, std::abs(a.v[p][n]));
      diff = std::max(diff, std::abs(a.v[p][n] - b.v[1 - p][n]));
    }
    EXPECT_LE(diff, 1e-9 * peak) << "port " << p;
  }
}

TEST(RunFdtd, MirrorRunMatchesSecondExcitation) {
  const PixelGrid g = small_patch(6);
  const Scene s = build_scene(g, g, 2.2e-3, MaterialStack{}, 2);
  RunOptions o;
  o.stop_on_decay = false;
  const TimeSeries m = mirror_run(run_fdtd(s, 1, 2000, Pulse{}, o));
  const TimeSeries r2 = run_fdtd(s, 2, 2000, Pulse{}, o);
  double peak = 0.0, diff = 0.0;
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t n = 0; n < r2.steps; ++n) {
      peak = std::max(peak, std::abs(r2.i[p][n]));
      diff = std::max(diff, std::abs(r2.i[p][n] - m.i[p][n]));
    }
  EXPECT_LE(diff, 1e-9 * peak);
}

TEST(RunFdtd, StableFor20000Steps) {
  const PixelGrid g = small_patch(8);
  const Scene s = build_scene(g, g, 0.0, MaterialStack{}, 2);
  RunOptions o;
  o.stop_on_decay = false;
  const TimeSeries r = run_fdtd(s, 1, 20000, Pulse{}, o);
  EXPECT_EQ(r.steps, 20000u);
  for (const auto& v : r.v)
    for (double x : v) ASSERT_TRUE(std::isfinite(x));
}

TEST(RunFdtd, EnergyNonIncreasingAfterExtinction) {
  const PixelGrid g = small_patch(2);
  const Scene s = build_scene(g, g, 2.2e-3, MaterialStack{}, 2);
  RunOptions o;
  o.energy_interval = 50;
  const TimeSeries r = run_fdtd(s, 1, 30000, Pulse{}, o);
  std::size_t checked = 0;
  for (std::size_t a = 1; a < r.energy.size(); ++a) {
    if (r.energy[a - 1].step < r.extinction_step) continue;
    EXPECT_LE(r.energy[a].energy, r.energy[a - 1].energy * (1.0 + 1e-6)) << "sample " << a;
    ++checked;
  }
  EXPECT_GT(checked, 10u);
}

TEST(RunFdtd, FarApartPatchesDecoupled) {
  const PixelGrid g = make_grid(3, 3, true);
  const Scene s = build_scene(g, g, 60e-3, MaterialStack{}, 2);
  const TimeSeries r = run_fdtd(s, 1, 60000, Pulse{});
  const SParamSet sp = extract_sparams({r, mirror_run(r)}, Band{}, 101);
  for (std::size_t k = 0; k < sp.size(); ++k) EXPECT_LT(db_mag(sp.s[k][1][0]), -40.0) << sp.freqs[k];
}
