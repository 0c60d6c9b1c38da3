#pragma once

// Desk-scale 3-D FDTD solver for pixelated patch pairs.
//
// Lattice conventions
// -------------------
// The lattice has cells_x * cells_y * cells_z cells. Every field component is
// stored on the node grid (cells+1 in each direction), index
// (i * (cells_y+1) + j) * (cells_z+1) + k, z fastest. Component positions:
//
//   Ex (i+1/2, j,     k    )   Hx (i,     j+1/2, k+1/2)
//   Ey (i,     j+1/2, k    )   Hy (i+1/2, j,     k+1/2)
//   Ez (i,     j,     k+1/2)   Hz (i+1/2, j+1/2, k    )
//
// The outer box is PEC; k = 0 is the ground plane. CPML layers line the four
// side walls and the top. dx, dy are uniform; dz may vary per layer so the
// substrate can be resolved finely while the air above grows coarser.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pixant/error.hpp"
#include "pixant/grid.hpp"

namespace pixant {

namespace phys {
inline constexpr double c0 = 299792458.0;
inline constexpr double mu0 = 1.25663706212e-6;
inline constexpr double eps0 = 1.0 / (mu0 * c0 * c0);
inline constexpr double eta0 = mu0 * c0;
}  // namespace phys

struct MaterialStack {
  double eps_r = 2.2;
  double h = 0.787e-3;
  double loss_tangent = 0.0;
  /// Frequency at which the loss tangent is converted to a conductivity.
  double loss_ref_freq = 5.4e9;

  static MaterialStack rogers_like() { return MaterialStack{}; }

  double conductivity() const {
    return 2.0 * std::numbers::pi * loss_ref_freq * phys::eps0 * eps_r * loss_tangent;
  }

  void validate() const {
    if (!(eps_r >= 1.0)) throw std::invalid_argument("materials: eps_r must be >= 1");
    if (!(h > 0.0)) throw std::invalid_argument("materials: h must be positive");
    if (!(loss_tangent >= 0.0)) throw std::invalid_argument("materials: loss_tangent must be >= 0");
    if (!(loss_ref_freq > 0.0)) throw std::invalid_argument("materials: loss_ref_freq must be positive");
  }
};

struct BoundarySpec {
  int pml_cells = 8;
  int order = 3;
  double reflection = 1e-6;
  double kappa_max = 3.0;
  double alpha_max = 0.05;  // S/m
};

/// Discretization choices for build_scene.
struct LatticeSpec {
  int substrate_cells = 3;
  int air_cells = 10;
  double z_grading = 1.3;
  int feed_length_pixels = 1;
  double port_z0 = 50.0;
  double port_rs = 50.0;
  BoundarySpec boundary{};

  void validate() const {
    if (substrate_cells < 3) throw std::invalid_argument("lattice: substrate needs >= 3 cells");
    if (air_cells < 10) throw std::invalid_argument("lattice: air margin needs >= 10 cells");
    if (boundary.pml_cells < 6) throw std::invalid_argument("lattice: absorbing layer needs >= 6 cells");
    if (boundary.order < 1) throw std::invalid_argument("lattice: pml order must be >= 1");
    if (!(boundary.reflection > 0.0 && boundary.reflection < 1.0))
      throw std::invalid_argument("lattice: pml reflection must lie in (0, 1)");
    if (!(boundary.kappa_max >= 1.0)) throw std::invalid_argument("lattice: kappa_max must be >= 1");
    if (!(boundary.alpha_max >= 0.0)) throw std::invalid_argument("lattice: alpha_max must be >= 0");
    if (!(z_grading >= 1.0)) throw std::invalid_argument("lattice: z_grading must be >= 1");
    if (feed_length_pixels < 1) throw std::invalid_argument("lattice: feed length must be >= 1 pixel");
    if (!(port_z0 > 0.0) || !(port_rs > 0.0))
      throw std::invalid_argument("lattice: port impedances must be positive");
  }
};

/// Lumped port across the vertical Ez edges k0..k1-1 of node column (i, j).
/// The source branch (voltage source in series with rs) is spread over the
/// column in proportion to edge length.
struct Port {
  int index = 1;
  int i = 0;
  int j = 0;
  int k0 = 0;
  int k1 = 1;
  double z0 = 50.0;
  double rs = 50.0;
  /// +1: positive terminal at the top of the column.
  int polarity = 1;
};

/// Passive resistor spread over Ez edges k0..k1-1 of column (i, j).
struct LumpedLoad {
  int i = 0;
  int j = 0;
  int k0 = 0;
  int k1 = 1;
  double r = 50.0;
};

struct PatchPlacement {
  std::string name;
  int x0 = 0;  // first cell
  int y0 = 0;
  int cells_x = 0;
  int cells_y = 0;
  int metal_pixels = 0;
  bool mirrored = false;
};

struct Scene {
  int cells_x = 0;
  int cells_y = 0;
  int cells_z = 0;
  double dx = 0.0;
  double dy = 0.0;
  std::vector<double> dz;
  BoundarySpec boundary{};
  int substrate_cells = 0;
  double substrate_eps_r = 1.0;
  double substrate_sigma = 0.0;

  std::vector<double> eps_r;  // per cell
  std::vector<double> sigma;  // per cell, S/m
  std::vector<std::uint8_t> pec_x, pec_y, pec_z;  // per edge, node layout
  std::vector<Port> ports;
  std::vector<LumpedLoad> loads;

  std::vector<PatchPlacement> patches;
  int feed_strips = 0;

  /// Empty box: vacuum everywhere, PEC walls (k = 0 is the ground plane).
  static Scene blank(int cells_x, int cells_y, double dx, double dy, std::vector<double> dz,
                     BoundarySpec boundary = {}) {
    if (cells_x < 1 || cells_y < 1 || dz.empty())
      throw std::invalid_argument("scene: cell counts must be positive");
    if (!(dx > 0.0) || !(dy > 0.0)) throw std::invalid_argument("scene: cell sizes must be positive");
    for (double d : dz)
      if (!(d > 0.0)) throw std::invalid_argument("scene: cell sizes must be positive");
    Scene s;
    s.cells_x = cells_x;
    s.cells_y = cells_y;
    s.cells_z = static_cast<int>(dz.size());
    s.dx = dx;
    s.dy = dy;
    s.dz = std::move(dz);
    s.boundary = boundary;
    s.eps_r.assign(s.cell_count(), 1.0);
    s.sigma.assign(s.cell_count(), 0.0);
    s.pec_x.assign(s.node_count(), 0);
    s.pec_y.assign(s.node_count(), 0);
    s.pec_z.assign(s.node_count(), 0);
    return s;
  }

  std::size_t cell_count() const {
    return static_cast<std::size_t>(cells_x) * static_cast<std::size_t>(cells_y) *
           static_cast<std::size_t>(cells_z);
  }
  std::size_t node_count() const {
    return static_cast<std::size_t>(cells_x + 1) * static_cast<std::size_t>(cells_y + 1) *
           static_cast<std::size_t>(cells_z + 1);
  }
  std::size_t node(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(cells_y + 1) +
            static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(cells_z + 1) +
           static_cast<std::size_t>(k);
  }
  std::size_t cell(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(cells_y) +
            static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(cells_z) +
           static_cast<std::size_t>(k);
  }

  /// Dual edge length at z-node k.
  double dz_dual(int k) const {
    if (k <= 0) return 0.5 * dz.front();
    if (k >= cells_z) return 0.5 * dz.back();
    return 0.5 * (dz[static_cast<std::size_t>(k - 1)] + dz[static_cast<std::size_t>(k)]);
  }

  double min_dz() const { return *std::min_element(dz.begin(), dz.end()); }

  /// Dielectric slab occupying the lowest `ncells` layers, including the
  /// absorbing region.
  void set_substrate(int ncells, double eps, double sig) {
    substrate_cells = ncells;
    substrate_eps_r = eps;
    substrate_sigma = sig;
    for (int i = 0; i < cells_x; ++i)
      for (int j = 0; j < cells_y; ++j)
        for (int k = 0; k < ncells && k < cells_z; ++k) {
          eps_r[cell(i, j, k)] = eps;
          sigma[cell(i, j, k)] = sig;
        }
  }

  /// Horizontal PEC sheet covering cells [i0, i1) x [j0, j1) on z-node plane k.
  void add_pec_sheet(int i0, int i1, int j0, int j1, int k) {
    for (int i = i0; i < i1; ++i)
      for (int j = j0; j <= j1; ++j) pec_x[node(i, j, k)] = 1;
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j < j1; ++j) pec_y[node(i, j, k)] = 1;
  }

  std::size_t pec_edge_count() const {
    std::size_t n = 0;
    for (std::size_t e = 0; e < pec_x.size(); ++e) n += pec_x[e] + pec_y[e] + pec_z[e];
    return n;
  }

  /// Average of a per-cell quantity over the cells sharing an edge.
  double average_around(const std::vector<double>& per_cell, int axis, int i, int j, int k) const {
    // Cells sharing the edge: offsets of -1/0 in the two transverse directions.
    double sum = 0.0;
    int n = 0;
    for (int a = -1; a <= 0; ++a)
      for (int b = -1; b <= 0; ++b) {
        int ci = i, cj = j, ck = k;
        if (axis == 0) { cj += a; ck += b; }
        else if (axis == 1) { ci += a; ck += b; }
        else { ci += a; cj += b; }
        if (ci < 0 || cj < 0 || ck < 0 || ci >= cells_x || cj >= cells_y || ck >= cells_z) continue;
        sum += per_cell[cell(ci, cj, ck)];
        ++n;
      }
    return n ? sum / n : 1.0;
  }

  int pml() const { return boundary.pml_cells; }

  void validate() const {
    if (boundary.pml_cells < 1 || 2 * boundary.pml_cells >= cells_x ||
        2 * boundary.pml_cells >= cells_y || boundary.pml_cells >= cells_z)
      throw std::invalid_argument("scene: absorbing layers do not fit the lattice");
    if (eps_r.size() != cell_count() || sigma.size() != cell_count() ||
        pec_x.size() != node_count() || pec_y.size() != node_count() || pec_z.size() != node_count())
      throw std::invalid_argument("scene: storage does not match lattice dimensions");
    const int p = pml();
    auto inside = [&](int i, int j, int k0, int k1) {
      return i > p && i < cells_x - p && j > p && j < cells_y - p && k0 >= 0 && k1 > k0 &&
             k1 <= cells_z - p;
    };
    for (std::size_t a = 0; a < ports.size(); ++a) {
      const Port& pt = ports[a];
      if (pt.index != static_cast<int>(a) + 1) throw std::invalid_argument("scene: ports must be numbered 1..n");
      if (!inside(pt.i, pt.j, pt.k0, pt.k1))
        throw std::invalid_argument("scene: port " + std::to_string(pt.index) +
                                    " not strictly inside the non-absorbing region");
      if (!(pt.z0 > 0.0) || !(pt.rs > 0.0)) throw std::invalid_argument("scene: port impedances must be positive");
      for (std::size_t b = 0; b < a; ++b)
        if (ports[b].i == pt.i && ports[b].j == pt.j)
          throw std::invalid_argument("scene: two ports share one feed column");
    }
    for (const auto& ld : loads)
      if (!inside(ld.i, ld.j, ld.k0, ld.k1) || !(ld.r > 0.0))
        throw std::invalid_argument("scene: invalid lumped load");
  }
};

/// Rasterizes the coplanar two-element problem. Patch A sits on the left,
/// patch B is placed as its mirror image on the right so that identical grids
/// yield a left-right symmetric scene. Feed strips run from the feed pixel
/// towards -y; each ends in a lumped port spanning the substrate.
inline Scene build_scene(const PixelGrid& patch_a, const PixelGrid& patch_b, double spacing,
                         const MaterialStack& materials, int resolution,
                         const LatticeSpec& lattice = {}) {
  patch_a.validate();
  patch_b.validate();
  materials.validate();
  lattice.validate();
  if (resolution < 2) throw std::invalid_argument("build_scene: resolution must be >= 2 cells per pixel");
  if (!(spacing >= 0.0)) throw std::invalid_argument("build_scene: spacing must be >= 0");
  if (!patch_a.same_shape(patch_b)) throw std::invalid_argument("build_scene: patches must share a shape");
  if (patch_a.pitch != patch_b.pitch) throw std::invalid_argument("build_scene: patches must share a pitch");
  if (patch_a.feed != patch_b.feed) throw std::invalid_argument("build_scene: patches must share a feed cell");
  if (!is_repaired(patch_a) || !is_repaired(patch_b))
    throw std::invalid_argument("build_scene: grid contains floating pixels or an inactive feed");

  const int r = resolution;
  const double d = patch_a.pitch / r;
  const int gap = static_cast<int>(std::lround(spacing / d));
  const int p = lattice.boundary.pml_cells;
  const int air = lattice.air_cells;
  const int w = patch_a.nx * r;
  const int lf = lattice.feed_length_pixels * r;

  const int xa = p + air;
  const int xb = xa + w + gap;
  const int nx = xb + w + air + p;
  const int y_port = p + air;
  const int y_patch = y_port + lf;
  const int ny = y_patch + patch_a.ny * r + air + p;

  const int nsub = lattice.substrate_cells;
  std::vector<double> dz(static_cast<std::size_t>(nsub), materials.h / nsub);
  double next = materials.h / nsub;
  for (int a = 0; a < air; ++a) {
    next = std::min(next * lattice.z_grading, d);
    dz.push_back(std::max(next, materials.h / nsub));
  }
  for (int a = 0; a < p; ++a) dz.push_back(dz.back());

  Scene s = Scene::blank(nx, ny, d, d, std::move(dz), lattice.boundary);
  s.set_substrate(nsub, materials.eps_r, materials.conductivity());

  auto place = [&](const PixelGrid& g, const std::string& name, bool mirrored) {
    PatchPlacement pl{name, mirrored ? xb : xa, y_patch, w, g.ny * r, 0, mirrored};
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix) {
        if (!g.at(ix, iy)) continue;
        ++pl.metal_pixels;
        int x0 = xa + ix * r;
        if (mirrored) x0 = nx - x0 - r;
        s.add_pec_sheet(x0, x0 + r, y_patch + iy * r, y_patch + (iy + 1) * r, nsub);
      }
    int fx = xa + g.feed.ix * r;
    int port_i = fx + r / 2;
    if (mirrored) {
      fx = nx - fx - r;
      port_i = nx - port_i;
    }
    s.add_pec_sheet(fx, fx + r, y_port, y_patch, nsub);
    ++s.feed_strips;
    s.patches.push_back(pl);
    Port pt;
    pt.index = static_cast<int>(s.ports.size()) + 1;
    pt.i = port_i;
    pt.j = y_port;
    pt.k0 = 0;
    pt.k1 = nsub;
    pt.z0 = lattice.port_z0;
    pt.rs = lattice.port_rs;
    s.ports.push_back(pt);
  };
  place(patch_a, "A", false);
  place(patch_b, "B", true);
  s.validate();
  return s;
}

/// Left-right mirror image of a scene with port indices swapped (1 <-> 2,
/// generally reversed).
inline Scene mirror_scene(const Scene& in) {
  Scene s = in;
  const int nx = in.cells_x;
  for (int i = 0; i < in.cells_x; ++i)
    for (int j = 0; j < in.cells_y; ++j)
      for (int k = 0; k < in.cells_z; ++k) {
        s.eps_r[s.cell(nx - 1 - i, j, k)] = in.eps_r[in.cell(i, j, k)];
        s.sigma[s.cell(nx - 1 - i, j, k)] = in.sigma[in.cell(i, j, k)];
      }
  for (int i = 0; i <= in.cells_x; ++i)
    for (int j = 0; j <= in.cells_y; ++j)
      for (int k = 0; k <= in.cells_z; ++k) {
        if (i < in.cells_x) s.pec_x[s.node(nx - 1 - i, j, k)] = in.pec_x[in.node(i, j, k)];
        s.pec_y[s.node(nx - i, j, k)] = in.pec_y[in.node(i, j, k)];
        s.pec_z[s.node(nx - i, j, k)] = in.pec_z[in.node(i, j, k)];
      }
  s.ports.clear();
  for (auto it = in.ports.rbegin(); it != in.ports.rend(); ++it) {
    Port pt = *it;
    pt.i = nx - pt.i;
    pt.index = static_cast<int>(s.ports.size()) + 1;
    s.ports.push_back(pt);
  }
  for (auto& ld : s.loads) ld.i = nx - ld.i;
  s.patches.clear();
  for (auto it = in.patches.rbegin(); it != in.patches.rend(); ++it) {
    PatchPlacement pl = *it;
    pl.x0 = nx - pl.x0 - pl.cells_x;
    pl.mirrored = !pl.mirrored;
    s.patches.push_back(pl);
  }
  return s;
}

/// Line-oriented text description of a scene; see README for the format.
inline std::string scene_audit(const Scene& s) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::size_t metal = 0;
  for (const auto& pl : s.patches) metal += static_cast<std::size_t>(pl.metal_pixels);
  out << "pixant-scene 1\n";
  out << "cells " << s.cells_x << ' ' << s.cells_y << ' ' << s.cells_z << '\n';
  out << "dx " << num(s.dx) << '\n';
  out << "dy " << num(s.dy) << '\n';
  out << "dz";
  for (double d : s.dz) out << ' ' << num(d);
  out << '\n';
  out << "pml " << s.boundary.pml_cells << ' ' << s.boundary.order << ' '
      << num(s.boundary.reflection) << ' ' << num(s.boundary.kappa_max) << ' '
      << num(s.boundary.alpha_max) << '\n';
  out << "substrate " << s.substrate_cells << ' ' << num(s.substrate_eps_r) << ' '
      << num(s.substrate_sigma) << '\n';
  out << "pec_edges " << s.pec_edge_count() << '\n';
  out << "metal_pixels " << metal << '\n';
  out << "feed_strips " << s.feed_strips << '\n';
  out << "ground_planes 1\n";
  for (const auto& pl : s.patches)
    out << "patch " << pl.name << ' ' << pl.x0 << ' ' << pl.y0 << ' ' << pl.cells_x << ' '
        << pl.cells_y << ' ' << pl.metal_pixels << ' ' << (pl.mirrored ? 1 : 0) << '\n';
  for (const auto& pt : s.ports)
    out << "port " << pt.index << ' ' << pt.i << ' ' << pt.j << ' ' << pt.k0 << ' ' << pt.k1 << ' '
        << num(pt.z0) << ' ' << num(pt.rs) << ' ' << pt.polarity << '\n';
  for (const auto& ld : s.loads)
    out << "load " << ld.i << ' ' << ld.j << ' ' << ld.k0 << ' ' << ld.k1 << ' ' << num(ld.r) << '\n';
  out << "end\n";
  return out.str();
}

inline double courant_dt(double dx, double dy, double dz, double cfl = 0.99) {
  if (!(dx > 0.0) || !(dy > 0.0) || !(dz > 0.0))
    throw std::invalid_argument("courant_dt: cell sizes must be positive");
  return cfl / (phys::c0 * std::sqrt(1.0 / (dx * dx) + 1.0 / (dy * dy) + 1.0 / (dz * dz)));
}

inline double courant_dt(const Scene& s, double cfl = 0.99) {
  return courant_dt(s.dx, s.dy, s.min_dz(), cfl);
}

/// Differentiated Gaussian voltage waveform with unit peak amplitude.
/// Its spectrum peaks at `center`.
struct Pulse {
  double center = 5.5e9;
  double amplitude = 1.0;
  double delay_widths = 8.0;

  double tau() const { return 1.0 / (2.0 * std::numbers::pi * center); }
  double delay() const { return delay_widths * tau(); }

  double operator()(double t) const {
    const double x = (t - delay()) / tau();
    return amplitude * std::sqrt(std::numbers::e) * -x * std::exp(-0.5 * x * x);
  }

  /// Spectral magnitude relative to its peak.
  double relative_spectrum(double f) const {
    const double x = f / center;
    return x * std::exp(-0.5 * (x * x - 1.0));
  }

  /// Time after which |pulse| stays below `rel` of its peak.
  double extinction_time(double rel = 1e-12) const {
    auto g = [](double x) { return std::sqrt(std::numbers::e) * x * std::exp(-0.5 * x * x); };
    double lo = 1.0, hi = 64.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > rel ? lo : hi) = mid;
    }
    return delay() + hi * tau();
  }

  void validate() const {
    if (!(center > 0.0) || !(amplitude > 0.0) || !(delay_widths >= 4.0))
      throw std::invalid_argument("pulse: invalid parameters");
  }
};

struct EnergySample {
  std::size_t step = 0;
  double energy = 0.0;
};

/// Port waveforms of one excitation. Sample n of every signal refers to time
/// (n + 1/2) * dt.
struct TimeSeries {
  double dt = 0.0;
  int active_port = 1;
  std::size_t steps = 0;
  bool converged = false;
  double trailing_ratio = 0.0;
  Pulse pulse{};
  std::vector<double> z0;
  std::vector<double> rs;
  std::vector<std::vector<double>> v;
  std::vector<std::vector<double>> i;
  std::vector<double> source;
  std::size_t extinction_step = 0;
  std::vector<EnergySample> energy;

  std::size_t port_count() const { return v.size(); }
};

/// Swaps the records of a two-port run: for a left-right symmetric scene the
/// run exciting port 1 mirrored is the run exciting port 2.
inline TimeSeries mirror_run(const TimeSeries& ts) {
  if (ts.port_count() != 2) throw std::invalid_argument("mirror_run: two-port runs only");
  TimeSeries m = ts;
  std::swap(m.v[0], m.v[1]);
  std::swap(m.i[0], m.i[1]);
  std::swap(m.z0[0], m.z0[1]);
  std::swap(m.rs[0], m.rs[1]);
  m.active_port = ts.active_port == 1 ? 2 : 1;
  return m;
}

struct FieldState {
  std::vector<double> ex, ey, ez, hx, hy, hz;

  static FieldState zeros(const Scene& s) {
    FieldState f;
    for (auto* c : {&f.ex, &f.ey, &f.ez, &f.hx, &f.hy, &f.hz}) c->assign(s.node_count(), 0.0);
    return f;
  }
};

/// Electromagnetic energy inside the non-absorbing region,
/// 1/2 sum(eps |E|^2 + mu |H|^2) dV. When `h_prev` holds the magnetic field
/// half a step earlier, the magnetic term uses H(n-1/2) . H(n+1/2), the
/// quantity the leapfrog scheme conserves.
inline double total_field_energy(const Scene& s, const FieldState& f,
                                 const FieldState* h_prev = nullptr) {
  const int p = s.pml();
  const int nx = s.cells_x, ny = s.cells_y, nz = s.cells_z;
  const double area = s.dx * s.dy;
  double we = 0.0, wh = 0.0;
  auto hterm = [&](const std::vector<double>& cur, const std::vector<double>* prev, std::size_t n) {
    return prev ? cur[n] * (*prev)[n] : cur[n] * cur[n];
  };
  for (int i = p; i <= nx - p; ++i)
    for (int j = p; j <= ny - p; ++j)
      for (int k = 0; k <= nz - p; ++k) {
        const std::size_t n = s.node(i, j, k);
        const double dzd = s.dz_dual(k);
        if (i < nx - p) we += s.average_around(s.eps_r, 0, i, j, k) * f.ex[n] * f.ex[n] * area * dzd;
        if (j < ny - p) we += s.average_around(s.eps_r, 1, i, j, k) * f.ey[n] * f.ey[n] * area * dzd;
        if (k < nz - p) {
          const double dzk = s.dz[static_cast<std::size_t>(k)];
          we += s.average_around(s.eps_r, 2, i, j, k) * f.ez[n] * f.ez[n] * area * dzk;
          if (j < ny - p) wh += hterm(f.hx, h_prev ? &h_prev->hx : nullptr, n) * area * dzk;
          if (i < nx - p) wh += hterm(f.hy, h_prev ? &h_prev->hy : nullptr, n) * area * dzk;
        }
        if (i < nx - p && j < ny - p) wh += hterm(f.hz, h_prev ? &h_prev->hz : nullptr, n) * area * dzd;
      }
  return 0.5 * (phys::eps0 * we + phys::mu0 * wh);
}

struct RunOptions {
  /// Early stop once port signal energy over the trailing window falls below
  /// this fraction of its peak window energy.
  double decay_threshold = 1e-8;
  /// Trailing window length in periods of the pulse centre frequency.
  double window_periods = 4.0;
  /// Sample total_field_energy every this many steps (0: never).
  std::size_t energy_interval = 0;
  /// Extra stepping after the decay criterion is met (used by tests).
  bool stop_on_decay = true;
  double cfl = 0.99;
};

namespace detail {

struct CpmlAxis {
  // Per position along one axis: E at nodes, H at half nodes.
  std::vector<double> inv_e, inv_h;  // 1 / (kappa * spacing)
  std::vector<double> be, ae, bh, ah;  // ae, ah already divided by spacing
  std::vector<int> e_idx, h_idx;       // positions inside the layers
};

inline CpmlAxis make_axis(int cells, const std::vector<double>& spacing_primal,
                          const std::vector<double>& spacing_dual, bool low_layer, bool high_layer,
                          const BoundarySpec& b, double dt) {
  CpmlAxis ax;
  ax.inv_e.assign(static_cast<std::size_t>(cells + 1), 0.0);
  ax.inv_h.assign(static_cast<std::size_t>(cells), 0.0);
  ax.be.assign(static_cast<std::size_t>(cells + 1), 1.0);
  ax.ae.assign(static_cast<std::size_t>(cells + 1), 0.0);
  ax.bh.assign(static_cast<std::size_t>(cells), 1.0);
  ax.ah.assign(static_cast<std::size_t>(cells), 0.0);

  std::vector<double> pos(static_cast<std::size_t>(cells + 1), 0.0);
  for (int n = 0; n < cells; ++n) pos[static_cast<std::size_t>(n + 1)] = pos[static_cast<std::size_t>(n)] + spacing_primal[static_cast<std::size_t>(n)];
  const int p = b.pml_cells;
  const double lo_if = pos[static_cast<std::size_t>(p)];
  const double hi_if = pos[static_cast<std::size_t>(cells - p)];
  const double thick_lo = lo_if - pos.front();
  const double thick_hi = pos.back() - hi_if;

  auto depth = [&](double x, double& thickness) {
    if (low_layer && x < lo_if) { thickness = thick_lo; return lo_if - x; }
    if (high_layer && x > hi_if) { thickness = thick_hi; return x - hi_if; }
    thickness = 1.0;
    return 0.0;
  };
  auto coeffs = [&](double x, double& kappa, double& bcoef, double& acoef) {
    double thickness = 1.0;
    const double rho = depth(x, thickness);
    if (rho <= 0.0) { kappa = 1.0; bcoef = 1.0; acoef = 0.0; return false; }
    const double u = rho / thickness;
    const double sigma_max = -(b.order + 1) * std::log(b.reflection) / (2.0 * phys::eta0 * thickness);
    const double sigma = sigma_max * std::pow(u, b.order);
    kappa = 1.0 + (b.kappa_max - 1.0) * std::pow(u, b.order);
    const double alpha = b.alpha_max * (1.0 - u);
    bcoef = std::exp(-(sigma / kappa + alpha) * dt / phys::eps0);
    acoef = sigma / (sigma * kappa + kappa * kappa * alpha) * (bcoef - 1.0);
    return true;
  };
  for (int n = 0; n <= cells; ++n) {
    double kappa, bc, ac;
    const bool in = coeffs(pos[static_cast<std::size_t>(n)], kappa, bc, ac);
    const double dual = spacing_dual[static_cast<std::size_t>(n)];
    ax.inv_e[static_cast<std::size_t>(n)] = 1.0 / (kappa * dual);
    ax.be[static_cast<std::size_t>(n)] = bc;
    ax.ae[static_cast<std::size_t>(n)] = ac / dual;
    if (in && n > 0 && n < cells) ax.e_idx.push_back(n);
  }
  for (int n = 0; n < cells; ++n) {
    double kappa, bc, ac;
    const double x = 0.5 * (pos[static_cast<std::size_t>(n)] + pos[static_cast<std::size_t>(n + 1)]);
    const bool in = coeffs(x, kappa, bc, ac);
    const double primal = spacing_primal[static_cast<std::size_t>(n)];
    ax.inv_h[static_cast<std::size_t>(n)] = 1.0 / (kappa * primal);
    ax.bh[static_cast<std::size_t>(n)] = bc;
    ax.ah[static_cast<std::size_t>(n)] = ac / primal;
    if (in) ax.h_idx.push_back(n);
  }
  return ax;
}

struct LumpedEdge {
  std::size_t n = 0;
  double cs = 0.0;       // source coefficient
  double share = 0.0;    // fraction of the column's source voltage
  double dz = 0.0;
  double eps = 0.0;
  double g_load = 0.0;   // conductance of co-located passive loads
  int port = -1;         // owning port (0-based), -1 for load-only edges
  int i = 0, j = 0, k = 0;
};

class Engine {
 public:
  Engine(const Scene& s, double dt) : s_(s), dt_(dt) {
    s.validate();
    nx_ = s.cells_x;
    ny_ = s.cells_y;
    nz_ = s.cells_z;
    sy_ = static_cast<std::size_t>(nz_ + 1);
    sx_ = static_cast<std::size_t>(ny_ + 1) * sy_;
    f_ = FieldState::zeros(s);

    std::vector<double> dxv(static_cast<std::size_t>(nx_), s.dx), dyv(static_cast<std::size_t>(ny_), s.dy);
    std::vector<double> dxd(static_cast<std::size_t>(nx_ + 1), s.dx), dyd(static_cast<std::size_t>(ny_ + 1), s.dy);
    std::vector<double> dzd(static_cast<std::size_t>(nz_ + 1));
    for (int k = 0; k <= nz_; ++k) dzd[static_cast<std::size_t>(k)] = s.dz_dual(k);
    ax_ = make_axis(nx_, dxv, dxd, true, true, s.boundary, dt);
    ay_ = make_axis(ny_, dyv, dyd, true, true, s.boundary, dt);
    az_ = make_axis(nz_, s.dz, dzd, false, true, s.boundary, dt);
    allocate_cpml();

    build_coefficients();
  }

  const FieldState& fields() const { return f_; }

  void update_h() {
    const double ch = dt_ / phys::mu0;
    double* __restrict hx = f_.hx.data();
    double* __restrict hy = f_.hy.data();
    double* __restrict hz = f_.hz.data();
    const double* __restrict ex = f_.ex.data();
    const double* __restrict ey = f_.ey.data();
    const double* __restrict ez = f_.ez.data();
    const double* __restrict idzh = az_.inv_h.data();
    const double* __restrict bz = az_.bh.data();
    const double* __restrict az = az_.ah.data();
    const std::size_t sx = sx_, sy = sy_;
    const int kz = kz_h_;

    // Hx: -dEz/dy + dEy/dz
    for (int i = 1; i < nx_; ++i)
      for (int j = 0; j < ny_; ++j) {
        const std::size_t b = static_cast<std::size_t>(i) * sx + static_cast<std::size_t>(j) * sy;
        const double cy = ay_.inv_h[static_cast<std::size_t>(j)];
        for (int k = 0; k < nz_; ++k)
          hx[b + k] -= ch * ((ez[b + sy + k] - ez[b + k]) * cy - (ey[b + k + 1] - ey[b + k]) * idzh[k]);
        if (const int s = slot_hy_[static_cast<std::size_t>(j)]; s >= 0) {
          const double bb = ay_.bh[static_cast<std::size_t>(j)], aa = ay_.ah[static_cast<std::size_t>(j)];
          double* __restrict psi = &psi_hxy_[yslab(i, s)];
          for (int k = 0; k < nz_; ++k) {
            psi[k] = bb * psi[k] + aa * (ez[b + sy + k] - ez[b + k]);
            hx[b + k] -= ch * psi[k];
          }
        }
        double* __restrict psi = &psi_hxz_[zslab(i, j)];
        for (int k = kz; k < nz_; ++k) {
          double& q = psi[k - kz];
          q = bz[k] * q + az[k] * (ey[b + k + 1] - ey[b + k]);
          hx[b + k] += ch * q;
        }
      }
    // Hy: -dEx/dz + dEz/dx
    for (int i = 0; i < nx_; ++i) {
      const double cx = ax_.inv_h[static_cast<std::size_t>(i)];
      const int sxl = slot_hx_[static_cast<std::size_t>(i)];
      const double bx = ax_.bh[static_cast<std::size_t>(i)], axc = ax_.ah[static_cast<std::size_t>(i)];
      for (int j = 1; j < ny_; ++j) {
        const std::size_t b = static_cast<std::size_t>(i) * sx + static_cast<std::size_t>(j) * sy;
        for (int k = 0; k < nz_; ++k)
          hy[b + k] -= ch * ((ex[b + k + 1] - ex[b + k]) * idzh[k] - (ez[b + sx + k] - ez[b + k]) * cx);
        if (sxl >= 0) {
          double* __restrict psi = &psi_hyx_[xslab(sxl, j)];
          for (int k = 0; k < nz_; ++k) {
            psi[k] = bx * psi[k] + axc * (ez[b + sx + k] - ez[b + k]);
            hy[b + k] += ch * psi[k];
          }
        }
        double* __restrict psi = &psi_hyz_[zslab(i, j)];
        for (int k = kz; k < nz_; ++k) {
          double& q = psi[k - kz];
          q = bz[k] * q + az[k] * (ex[b + k + 1] - ex[b + k]);
          hy[b + k] -= ch * q;
        }
      }
    }
    // Hz: -dEy/dx + dEx/dy
    for (int i = 0; i < nx_; ++i) {
      const double cx = ax_.inv_h[static_cast<std::size_t>(i)];
      const int sxl = slot_hx_[static_cast<std::size_t>(i)];
      const double bx = ax_.bh[static_cast<std::size_t>(i)], axc = ax_.ah[static_cast<std::size_t>(i)];
      for (int j = 0; j < ny_; ++j) {
        const std::size_t b = static_cast<std::size_t>(i) * sx + static_cast<std::size_t>(j) * sy;
        const double cy = ay_.inv_h[static_cast<std::size_t>(j)];
        for (int k = 1; k < nz_; ++k)
          hz[b + k] -= ch * ((ey[b + sx + k] - ey[b + k]) * cx - (ex[b + sy + k] - ex[b + k]) * cy);
        if (sxl >= 0) {
          double* __restrict psi = &psi_hzx_[xslab(sxl, j)];
          for (int k = 1; k < nz_; ++k) {
            psi[k] = bx * psi[k] + axc * (ey[b + sx + k] - ey[b + k]);
            hz[b + k] -= ch * psi[k];
          }
        }
        if (const int s = slot_hy_[static_cast<std::size_t>(j)]; s >= 0) {
          const double bb = ay_.bh[static_cast<std::size_t>(j)], aa = ay_.ah[static_cast<std::size_t>(j)];
          double* __restrict psi = &psi_hzy_[yslab(i, s)];
          for (int k = 1; k < nz_; ++k) {
            psi[k] = bb * psi[k] + aa * (ex[b + sy + k] - ex[b + k]);
            hz[b + k] += ch * psi[k];
          }
        }
      }
    }
  }

  void update_e() {
    double* __restrict ex = f_.ex.data();
    double* __restrict ey = f_.ey.data();
    double* __restrict ez = f_.ez.data();
    const double* __restrict hx = f_.hx.data();
    const double* __restrict hy = f_.hy.data();
    const double* __restrict hz = f_.hz.data();
    const double* __restrict cax = ca_x_.data();
    const double* __restrict cbx = cb_x_.data();
    const double* __restrict cay = ca_y_.data();
    const double* __restrict cby = cb_y_.data();
    const double* __restrict caz = ca_z_.data();
    const double* __restrict cbz = cb_z_.data();
    const double* __restrict idze = az_.inv_e.data();
    const double* __restrict bz = az_.be.data();
    const double* __restrict az = az_.ae.data();
    const std::size_t sx = sx_, sy = sy_;
    const int kz = kz_e_;

    // Ex: dHz/dy - dHy/dz
    for (int i = 0; i < nx_; ++i)
      for (int j = 1; j < ny_; ++j) {
        const std::size_t b = static_cast<std::size_t>(i) * sx + static_cast<std::size_t>(j) * sy;
        const double cy = ay_.inv_e[static_cast<std::size_t>(j)];
        for (int k = 1; k < nz_; ++k) {
          const std::size_t n = b + k;
          ex[n] = cax[n] * ex[n] + cbx[n] * ((hz[n] - hz[n - sy]) * cy - (hy[n] - hy[n - 1]) * idze[k]);
        }
        if (const int s = slot_ey_[static_cast<std::size_t>(j)]; s >= 0) {
          const double bb = ay_.be[static_cast<std::size_t>(j)], aa = ay_.ae[static_cast<std::size_t>(j)];
          double* __restrict psi = &psi_exy_[yslab_e(i, s)];
          for (int k = 1; k < nz_; ++k) {
            const std::size_t n = b + k;
            psi[k] = bb * psi[k] + aa * (hz[n] - hz[n - sy]);
            ex[n] += cbx[n] * psi[k];
          }
        }
        double* __restrict psi = &psi_exz_[zslab_e(i, j)];
        for (int k = kz; k < nz_; ++k) {
          const std::size_t n = b + k;
          double& q = psi[k - kz];
          q = bz[k] * q + az[k] * (hy[n] - hy[n - 1]);
          ex[n] -= cbx[n] * q;
        }
      }
    // Ey: dHx/dz - dHz/dx
    for (int i = 1; i < nx_; ++i) {
      const double cx = ax_.inv_e[static_cast<std::size_t>(i)];
      const int sxl = slot_ex_[static_cast<std::size_t>(i)];
      const double bx = ax_.be[static_cast<std::size_t>(i)], axc = ax_.ae[static_cast<std::size_t>(i)];
      for (int j = 0; j < ny_; ++j) {
        const std::size_t b = static_cast<std::size_t>(i) * sx + static_cast<std::size_t>(j) * sy;
        for (int k = 1; k < nz_; ++k) {
          const std::size_t n = b + k;
          ey[n] = cay[n] * ey[n] + cby[n] * ((hx[n] - hx[n - 1]) * idze[k] - (hz[n] - hz[n - sx]) * cx);
        }
        if (sxl >= 0) {
          double* __restrict psi = &psi_eyx_[xslab_e(sxl, j)];
          for (int k = 1; k < nz_; ++k) {
            const std::size_t n = b + k;
            psi[k] = bx * psi[k] + axc * (hz[n] - hz[n - sx]);
            ey[n] -= cby[n] * psi[k];
          }
        }
        double* __restrict psi = &psi_eyz_[zslab_e(i, j)];
        for (int k = kz; k < nz_; ++k) {
          const std::size_t n = b + k;
          double& q = psi[k - kz];
          q = bz[k] * q + az[k] * (hx[n] - hx[n - 1]);
          ey[n] += cby[n] * q;
        }
      }
    }
    // Ez: dHy/dx - dHx/dy
    for (int i = 1; i < nx_; ++i) {
      const double cx = ax_.inv_e[static_cast<std::size_t>(i)];
      const int sxl = slot_ex_[static_cast<std::size_t>(i)];
      const double bx = ax_.be[static_cast<std::size_t>(i)], axc = ax_.ae[static_cast<std::size_t>(i)];
      for (int j = 1; j < ny_; ++j) {
        const std::size_t b = static_cast<std::size_t>(i) * sx + static_cast<std::size_t>(j) * sy;
        const double cy = ay_.inv_e[static_cast<std::size_t>(j)];
        for (int k = 0; k < nz_; ++k) {
          const std::size_t n = b + k;
          ez[n] = caz[n] * ez[n] + cbz[n] * ((hy[n] - hy[n - sx]) * cx - (hx[n] - hx[n - sy]) * cy);
        }
        if (sxl >= 0) {
          double* __restrict psi = &psi_ezx_[xslab_e(sxl, j)];
          for (int k = 0; k < nz_; ++k) {
            const std::size_t n = b + k;
            psi[k] = bx * psi[k] + axc * (hy[n] - hy[n - sx]);
            ez[n] += cbz[n] * psi[k];
          }
        }
        if (const int s = slot_ey_[static_cast<std::size_t>(j)]; s >= 0) {
          const double bb = ay_.be[static_cast<std::size_t>(j)], aa = ay_.ae[static_cast<std::size_t>(j)];
          double* __restrict psi = &psi_ezy_[yslab_e(i, s)];
          for (int k = 0; k < nz_; ++k) {
            const std::size_t n = b + k;
            psi[k] = bb * psi[k] + aa * (hx[n] - hx[n - sy]);
            ez[n] -= cbz[n] * psi[k];
          }
        }
      }
    }
  }

  /// Circulation of H around every lumped edge; call between update_h and
  /// update_e.
  void capture_lumped_before_e() {
    for (std::size_t a = 0; a < lumped_.size(); ++a) {
      const LumpedEdge& le = lumped_[a];
      const std::size_t n = le.n;
      loop_[a] = (f_.hy[n] - f_.hy[n - sx_]) * s_.dy - (f_.hx[n] - f_.hx[n - sy_]) * s_.dx;
      e_old_[a] = f_.ez[n];
    }
  }

  /// Adds the source terms after update_e. `vs` holds the source voltage of
  /// each port at the half step.
  void apply_sources(const std::vector<double>& vs) {
    for (const LumpedEdge& le : lumped_) {
      if (le.port < 0) continue;
      const Port& pt = s_.ports[static_cast<std::size_t>(le.port)];
      f_.ez[le.n] -= le.cs * pt.polarity * vs[static_cast<std::size_t>(le.port)] * le.share;
    }
  }

  /// Port voltage and source-branch current at the half step just completed.
  /// The current is the Ampere loop around each gap edge less the edge's own
  /// displacement current and any co-located load current, averaged over the
  /// column.
  void port_readout(std::vector<double>& v, std::vector<double>& i) const {
    std::fill(v.begin(), v.end(), 0.0);
    std::fill(i.begin(), i.end(), 0.0);
    std::vector<int> count(v.size(), 0);
    const double area = s_.dx * s_.dy;
    for (std::size_t a = 0; a < lumped_.size(); ++a) {
      const LumpedEdge& le = lumped_[a];
      if (le.port < 0) continue;
      const Port& pt = s_.ports[static_cast<std::size_t>(le.port)];
      const double e_new = f_.ez[le.n];
      const double e_avg = 0.5 * (e_new + e_old_[a]);
      const double disp = le.eps * area * (e_new - e_old_[a]) / dt_;
      const double i_up = loop_[a] - disp - e_avg * le.dz * le.g_load;
      const auto p = static_cast<std::size_t>(le.port);
      v[p] += -pt.polarity * e_avg * le.dz;
      i[p] += pt.polarity * i_up;
      ++count[p];
    }
    for (std::size_t p = 0; p < v.size(); ++p)
      if (count[p]) i[p] /= count[p];
  }

  bool fields_finite() const {
    double acc = 0.0;
    for (const auto* c : {&f_.ex, &f_.ey, &f_.ez, &f_.hx, &f_.hy, &f_.hz})
      for (double x : *c) acc += x * x;
    return std::isfinite(acc);
  }

 private:
  void build_coefficients() {
    const std::size_t nn = s_.node_count();
    ca_x_.assign(nn, 0.0);
    cb_x_.assign(nn, 0.0);
    ca_y_.assign(nn, 0.0);
    cb_y_.assign(nn, 0.0);
    ca_z_.assign(nn, 0.0);
    cb_z_.assign(nn, 0.0);
    auto fill = [&](int axis, std::vector<double>& ca, std::vector<double>& cb,
                    const std::vector<std::uint8_t>& pec) {
      for (int i = 0; i <= nx_; ++i)
        for (int j = 0; j <= ny_; ++j)
          for (int k = 0; k <= nz_; ++k) {
            const std::size_t n = s_.node(i, j, k);
            if (pec[n]) continue;
            const double eps = phys::eps0 * s_.average_around(s_.eps_r, axis, i, j, k);
            const double sig = s_.average_around(s_.sigma, axis, i, j, k);
            const double q = sig * dt_ / (2.0 * eps);
            ca[n] = (1.0 - q) / (1.0 + q);
            cb[n] = (dt_ / eps) / (1.0 + q);
          }
    };
    fill(0, ca_x_, cb_x_, s_.pec_x);
    fill(1, ca_y_, cb_y_, s_.pec_y);
    fill(2, ca_z_, cb_z_, s_.pec_z);

    // Lumped elements on Ez edges (semi-implicit resistor update).
    const double area = s_.dx * s_.dy;
    auto find_or_add = [&](int i, int j, int k) -> LumpedEdge& {
      const std::size_t n = s_.node(i, j, k);
      for (auto& le : lumped_)
        if (le.n == n) return le;
      LumpedEdge le;
      le.n = n;
      le.dz = s_.dz[static_cast<std::size_t>(k)];
      le.eps = phys::eps0 * s_.average_around(s_.eps_r, 2, i, j, k);
      le.i = i;
      le.j = j;
      le.k = k;
      lumped_.push_back(le);
      return lumped_.back();
    };
      for (std::size_t p = 0; p < s_.ports.size(); ++p) {
      const Port& pt = s_.ports[p];
      double height = 0.0;
      for (int k = pt.k0; k < pt.k1; ++k) height += s_.dz[static_cast<std::size_t>(k)];
      for (int k = pt.k0; k < pt.k1; ++k) {
        LumpedEdge& le = find_or_add(pt.i, pt.j, k);
        if (le.port >= 0) throw std::invalid_argument("scene: overlapping ports");
        le.port = static_cast<int>(p);
        le.share = le.dz / height;
      }
    }
    for (const auto& ld : s_.loads) {
      double height = 0.0;
      for (int k = ld.k0; k < ld.k1; ++k) height += s_.dz[static_cast<std::size_t>(k)];
      for (int k = ld.k0; k < ld.k1; ++k) {
        LumpedEdge& le = find_or_add(ld.i, ld.j, k);
        le.g_load += 1.0 / (ld.r * le.dz / height);
      }
    }
    for (auto& le : lumped_) {
      double g_src_edge = 0.0;
      if (le.port >= 0) {
        const Port& pt = s_.ports[static_cast<std::size_t>(le.port)];
        g_src_edge = 1.0 / (pt.rs * le.share);
      }
      const double sig = s_.average_around(s_.sigma, 2, le.i, le.j, le.k);
      const double beta = dt_ * le.dz * (g_src_edge + le.g_load) / (2.0 * le.eps * area) +
                          sig * dt_ / (2.0 * le.eps);
      ca_z_[le.n] = (1.0 - beta) / (1.0 + beta);
      cb_z_[le.n] = (dt_ / le.eps) / (1.0 + beta);
      le.cs = (dt_ * g_src_edge / (le.eps * area)) / (1.0 + beta);
    }
    loop_.assign(lumped_.size(), 0.0);
    e_old_.assign(lumped_.size(), 0.0);
  }

  // Auxiliary CPML storage covers only the layers: x-layer arrays are
  // [slot][j][k], y-layer arrays [i][slot][k], z-layer arrays [i][j][k - k0].
  std::size_t xslab(int slot, int j) const { return (static_cast<std::size_t>(slot) * (ny_ + 1) + j) * sy_; }
  std::size_t xslab_e(int slot, int j) const { return xslab(slot, j); }
  std::size_t yslab(int i, int slot) const { return (static_cast<std::size_t>(i) * ny_slots_h_ + slot) * sy_; }
  std::size_t yslab_e(int i, int slot) const { return (static_cast<std::size_t>(i) * ny_slots_e_ + slot) * sy_; }
  std::size_t zslab(int i, int j) const {
    return (static_cast<std::size_t>(i) * (ny_ + 1) + j) * static_cast<std::size_t>(nz_ - kz_h_);
  }
  std::size_t zslab_e(int i, int j) const {
    return (static_cast<std::size_t>(i) * (ny_ + 1) + j) * static_cast<std::size_t>(nz_ - kz_e_);
  }

  void allocate_cpml() {
    auto slots = [](const std::vector<int>& idx, std::size_t n, std::vector<int>& slot) {
      slot.assign(n, -1);
      for (std::size_t s = 0; s < idx.size(); ++s) slot[static_cast<std::size_t>(idx[s])] = static_cast<int>(s);
      return idx.size();
    };
    const std::size_t xh = slots(ax_.h_idx, static_cast<std::size_t>(nx_), slot_hx_);
    const std::size_t xe = slots(ax_.e_idx, static_cast<std::size_t>(nx_ + 1), slot_ex_);
    ny_slots_h_ = slots(ay_.h_idx, static_cast<std::size_t>(ny_), slot_hy_);
    ny_slots_e_ = slots(ay_.e_idx, static_cast<std::size_t>(ny_ + 1), slot_ey_);
    kz_h_ = az_.h_idx.empty() ? nz_ : az_.h_idx.front();
    kz_e_ = az_.e_idx.empty() ? nz_ : az_.e_idx.front();
    const std::size_t plane = static_cast<std::size_t>(ny_ + 1) * sy_;
    const std::size_t columns = static_cast<std::size_t>(nx_ + 1) * static_cast<std::size_t>(ny_ + 1);
    psi_hyx_.assign(xh * plane, 0.0);
    psi_hzx_.assign(xh * plane, 0.0);
    psi_eyx_.assign(xe * plane, 0.0);
    psi_ezx_.assign(xe * plane, 0.0);
    psi_hxy_.assign(static_cast<std::size_t>(nx_ + 1) * ny_slots_h_ * sy_, 0.0);
    psi_hzy_.assign(static_cast<std::size_t>(nx_ + 1) * ny_slots_h_ * sy_, 0.0);
    psi_exy_.assign(static_cast<std::size_t>(nx_ + 1) * ny_slots_e_ * sy_, 0.0);
    psi_ezy_.assign(static_cast<std::size_t>(nx_ + 1) * ny_slots_e_ * sy_, 0.0);
    psi_hxz_.assign(columns * static_cast<std::size_t>(nz_ - kz_h_) + 1, 0.0);
    psi_hyz_.assign(columns * static_cast<std::size_t>(nz_ - kz_h_) + 1, 0.0);
    psi_exz_.assign(columns * static_cast<std::size_t>(nz_ - kz_e_) + 1, 0.0);
    psi_eyz_.assign(columns * static_cast<std::size_t>(nz_ - kz_e_) + 1, 0.0);
  }

  const Scene& s_;
  double dt_;
  int nx_ = 0, ny_ = 0, nz_ = 0;
  std::size_t sx_ = 0, sy_ = 0;
  FieldState f_;
  std::vector<double> ca_x_, cb_x_, ca_y_, cb_y_, ca_z_, cb_z_;
  CpmlAxis ax_, ay_, az_;
  std::vector<double> psi_hyx_, psi_hzx_, psi_hxy_, psi_hzy_, psi_hxz_, psi_hyz_;
  std::vector<double> psi_eyx_, psi_ezx_, psi_exy_, psi_ezy_, psi_exz_, psi_eyz_;
  std::vector<int> slot_hx_, slot_ex_, slot_hy_, slot_ey_;
  std::size_t ny_slots_h_ = 0, ny_slots_e_ = 0;
  int kz_h_ = 0, kz_e_ = 0;
  std::vector<LumpedEdge> lumped_;
  std::vector<double> loop_, e_old_;
};

}  // namespace detail

/// Leapfrog time stepping with the resistive source at `active_port` and
/// every other port terminated in its source resistance.
inline TimeSeries run_fdtd(const Scene& scene, int active_port, std::size_t max_steps,
                           const Pulse& pulse, const RunOptions& options = {}) {
  scene.validate();
  pulse.validate();
  if (active_port < 1 || active_port > static_cast<int>(scene.ports.size()))
    throw std::invalid_argument("run_fdtd: active port does not exist");
  if (max_steps < 1) throw std::invalid_argument("run_fdtd: max_steps must be >= 1");

  const double dt = courant_dt(scene, options.cfl);
  detail::Engine engine(scene, dt);
  const std::size_t np = scene.ports.size();

  TimeSeries ts;
  ts.dt = dt;
  ts.active_port = active_port;
  ts.pulse = pulse;
  for (const auto& pt : scene.ports) {
    ts.z0.push_back(pt.z0);
    ts.rs.push_back(pt.rs);
  }
  ts.v.assign(np, {});
  ts.i.assign(np, {});
  for (std::size_t p = 0; p < np; ++p) {
    ts.v[p].reserve(std::min<std::size_t>(max_steps, 1u << 16));
    ts.i[p].reserve(std::min<std::size_t>(max_steps, 1u << 16));
  }
  ts.extinction_step = static_cast<std::size_t>(std::ceil(pulse.extinction_time() / dt));

  const auto window = std::max<std::size_t>(
      16, static_cast<std::size_t>(std::ceil(options.window_periods / (pulse.center * dt))));
  std::vector<double> cumulative{0.0};
  double peak_window = 0.0;

  std::vector<double> vs(np, 0.0), v(np, 0.0), cur(np, 0.0);
  FieldState h_prev;

  for (std::size_t n = 0; n < max_steps; ++n) {
    const bool sample_energy = options.energy_interval && n % options.energy_interval == 0;
    if (sample_energy) {
      h_prev.hx = engine.fields().hx;
      h_prev.hy = engine.fields().hy;
      h_prev.hz = engine.fields().hz;
    }
    engine.update_h();
    if (sample_energy) ts.energy.push_back({n, total_field_energy(scene, engine.fields(), &h_prev)});

    engine.capture_lumped_before_e();
    engine.update_e();
    std::fill(vs.begin(), vs.end(), 0.0);
    const double src = pulse((static_cast<double>(n) + 0.5) * dt);
    vs[static_cast<std::size_t>(active_port - 1)] = src;
    engine.apply_sources(vs);
    engine.port_readout(v, cur);

    double power = 0.0;
    for (std::size_t p = 0; p < np; ++p) {
      if (!std::isfinite(v[p]) || !std::isfinite(cur[p])) throw NumericalInstability(n);
      ts.v[p].push_back(v[p]);
      ts.i[p].push_back(cur[p]);
      power += v[p] * v[p] / ts.z0[p] + ts.z0[p] * cur[p] * cur[p];
    }
    ts.source.push_back(src);
    ts.steps = n + 1;
    if ((n & 255u) == 255u && !engine.fields_finite()) throw NumericalInstability(n);

    cumulative.push_back(cumulative.back() + power);
    if (n + 1 >= window) {
      const double win = cumulative[n + 1] - cumulative[n + 1 - window];
      peak_window = std::max(peak_window, win);
      ts.trailing_ratio = peak_window > 0.0 ? win / peak_window : 0.0;
      if (n >= ts.extinction_step && peak_window > 0.0 && win < options.decay_threshold * peak_window) {
        ts.converged = true;
        if (options.stop_on_decay) break;
      }
    }
  }
  if (!engine.fields_finite()) throw NumericalInstability(ts.steps);
  return ts;
}

}  // namespace pixant
