#pragma once

// Binary pixel representation of one patch metallization.
//
// Bits are stored row-major: bit (ix, iy) lives at index iy * nx + ix, and
// (0, 0) is the patch corner nearest the feed line. Electrical connectivity is
// 4-neighbourhood; diagonal point contacts do not conduct.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixant/error.hpp"
#include "pixant/rng.hpp"

namespace pixant {

using BitVector = std::vector<std::uint8_t>;

struct Cell {
  int ix = 0;
  int iy = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

struct PixelGrid {
  static constexpr double kDefaultPitch = 2.2e-3;

  int nx = 1;
  int ny = 1;
  BitVector bits = BitVector(1, 0);
  double pitch = kDefaultPitch;
  Cell feed{};

  std::size_t size() const { return bits.size(); }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) +
           static_cast<std::size_t>(ix);
  }
  bool contains(Cell c) const { return c.ix >= 0 && c.ix < nx && c.iy >= 0 && c.iy < ny; }
  bool at(int ix, int iy) const { return bits[index(ix, iy)] != 0; }
  void set(int ix, int iy, bool on) { bits[index(ix, iy)] = on ? 1 : 0; }
  std::size_t active_count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool same_shape(const PixelGrid& o) const { return nx == o.nx && ny == o.ny; }

  void validate() const {
    if (nx < 1 || ny < 1) throw std::invalid_argument("pixel grid: dimensions must be positive");
    if (bits.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
      throw std::invalid_argument("pixel grid: bit count does not match nx*ny");
    if (!contains(feed)) throw std::invalid_argument("pixel grid: feed cell outside grid");
    if (!(pitch > 0.0)) throw std::invalid_argument("pixel grid: pitch must be positive");
  }

  friend bool operator==(const PixelGrid&, const PixelGrid&) = default;
};

inline Cell default_feed(int nx) { return Cell{nx / 2, 0}; }

inline PixelGrid make_grid(int nx, int ny, bool fill, double pitch = PixelGrid::kDefaultPitch) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("make_grid: zero dimension");
  PixelGrid g;
  g.nx = nx;
  g.ny = ny;
  g.bits.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), fill ? 1 : 0);
  g.pitch = pitch;
  g.feed = default_feed(nx);
  g.validate();
  return g;
}

/// Grid of the same geometry as `like` carrying `bits`.
inline PixelGrid with_bits(const PixelGrid& like, BitVector bits) {
  PixelGrid g = like;
  g.bits = std::move(bits);
  g.validate();
  return g;
}

/// Active cells reachable from `seed` through 4-adjacent active cells.
inline PixelGrid connected_component(const PixelGrid& grid, Cell seed) {
  if (!grid.contains(seed)) throw std::invalid_argument("connected_component: seed out of bounds");
  PixelGrid mask = grid;
  std::fill(mask.bits.begin(), mask.bits.end(), std::uint8_t{0});
  if (!grid.at(seed.ix, seed.iy)) return mask;

  std::deque<Cell> frontier{seed};
  mask.set(seed.ix, seed.iy, true);
  constexpr int kStep[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop_front();
    for (const auto& d : kStep) {
      const Cell n{c.ix + d[0], c.iy + d[1]};
      if (grid.contains(n) && grid.at(n.ix, n.iy) && !mask.at(n.ix, n.iy)) {
        mask.set(n.ix, n.iy, true);
        frontier.push_back(n);
      }
    }
  }
  return mask;
}

/// Deletes every pixel not galvanically connected to the feed; the feed cell
/// itself is always switched on.
inline PixelGrid repair_floating(const PixelGrid& grid) {
  grid.validate();
  PixelGrid forced = grid;
  forced.set(grid.feed.ix, grid.feed.iy, true);
  return connected_component(forced, grid.feed);
}

inline bool is_repaired(const PixelGrid& grid) { return repair_floating(grid) == grid; }

/// `n` independent Bernoulli(density) bits from a generator seeded by `seed`.
inline BitVector random_bits(std::size_t n, double density, std::uint64_t seed) {
  if (!(density >= 0.0 && density <= 1.0))
    throw std::invalid_argument("random_bits: density must lie in [0, 1]");
  Rng rng(seed);
  BitVector bits(n);
  for (auto& b : bits) b = uniform01(rng) < density ? 1 : 0;
  return bits;
}

inline PixelGrid random_grid(int nx, int ny, double density, std::uint64_t seed,
                             double pitch = PixelGrid::kDefaultPitch) {
  PixelGrid g = make_grid(nx, ny, false, pitch);
  g.bits = random_bits(g.size(), density, seed);
  return g;
}

inline std::size_t hamming(const PixelGrid& a, const PixelGrid& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("hamming: shape mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) d += (a.bits[i] != 0) != (b.bits[i] != 0);
  return d;
}

/// Mirror image across the vertical axis (ix -> nx-1-ix), feed included.
inline PixelGrid mirror_x(const PixelGrid& g) {
  PixelGrid m = g;
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) m.set(g.nx - 1 - ix, iy, g.at(ix, iy));
  m.feed.ix = g.nx - 1 - g.feed.ix;
  return m;
}

// ---- bit packing ---------------------------------------------------------

/// Row-major hex packing: each row occupies ceil(nx/8) bytes, bit ix of the
/// row goes to byte ix/8 at bit position ix%8 (least significant first).
inline std::string bits_hex(const BitVector& bits, int nx, int ny) {
  static constexpr char kDigits[] = "0123456789abcdef";
  const int row_bytes = (nx + 7) / 8;
  std::string out;
  out.reserve(static_cast<std::size_t>(row_bytes * ny * 2));
  for (int iy = 0; iy < ny; ++iy) {
    for (int byte = 0; byte < row_bytes; ++byte) {
      unsigned v = 0;
      for (int bit = 0; bit < 8; ++bit) {
        const int ix = byte * 8 + bit;
        if (ix < nx && bits[static_cast<std::size_t>(iy * nx + ix)]) v |= 1u << bit;
      }
      out.push_back(kDigits[v >> 4]);
      out.push_back(kDigits[v & 0xf]);
    }
  }
  return out;
}

inline BitVector bits_from_hex(const std::string& hex, int nx, int ny) {
  const int row_bytes = (nx + 7) / 8;
  if (hex.size() != static_cast<std::size_t>(row_bytes * ny * 2))
    throw std::invalid_argument("bits_from_hex: length does not match grid shape");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw std::invalid_argument("bits_from_hex: non-hex character");
  };
  BitVector bits(static_cast<std::size_t>(nx * ny), 0);
  for (int iy = 0; iy < ny; ++iy)
    for (int byte = 0; byte < row_bytes; ++byte) {
      const std::size_t at = static_cast<std::size_t>((iy * row_bytes + byte) * 2);
      const unsigned v = nibble(hex[at]) << 4 | nibble(hex[at + 1]);
      for (int bit = 0; bit < 8; ++bit) {
        const int ix = byte * 8 + bit;
        if (ix < nx) bits[static_cast<std::size_t>(iy * nx + ix)] = (v >> bit) & 1u;
        else if ((v >> bit) & 1u) throw std::invalid_argument("bits_from_hex: padding bit set");
      }
    }
  return bits;
}

// ---- P1 portable bitmap ----------------------------------------------------

inline void write_mask(std::ostream& out, const PixelGrid& g) {
  out << "P1\n" << g.nx << ' ' << g.ny << '\n';
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      if (ix) out << ' ';
      out << (g.at(ix, iy) ? '1' : '0');
    }
    out << '\n';
  }
}

/// Reads a P1 mask. Lines starting with '#' are skipped. Geometry other than
/// the bits (pitch, feed) comes from `like` when given.
inline PixelGrid read_mask(std::istream& in, const std::string& source = "mask",
                           const PixelGrid* like = nullptr) {
  std::string line;
  int lineno = 0;
  auto next = [&](std::string& into) {
    while (std::getline(in, into)) {
      ++lineno;
      if (!into.empty() && into.back() == '\r') into.pop_back();
      const auto first = into.find_first_not_of(" \t");
      if (first == std::string::npos || into[first] == '#') continue;
      return true;
    }
    return false;
  };
  if (!next(line)) throw ParseError(source, lineno + 1, "missing P1 header");
  {
    std::istringstream head(line);
    std::string magic, extra;
    head >> magic;
    if (magic != "P1" || (head >> extra)) throw ParseError(source, lineno, "expected header line 'P1'");
  }

  if (!next(line)) throw ParseError(source, lineno + 1, "missing dimensions line");
  int nx = 0, ny = 0;
  {
    std::istringstream dims(line);
    std::string extra;
    if (!(dims >> nx >> ny) || (dims >> extra) || nx < 1 || ny < 1)
      throw ParseError(source, lineno, "expected dimensions 'nx ny' with positive integers");
  }
  PixelGrid g = make_grid(nx, ny, false, like ? like->pitch : PixelGrid::kDefaultPitch);
  if (like && g.contains(like->feed)) g.feed = like->feed;

  for (int iy = 0; iy < ny; ++iy) {
    if (!next(line)) throw ParseError(source, lineno + 1, "missing row " + std::to_string(iy));
    std::istringstream row(line);
    std::string tok;
    int ix = 0;
    while (row >> tok) {
      if (tok != "0" && tok != "1")
        throw ParseError(source, lineno, "pixel value must be 0 or 1, got '" + tok + "'");
      if (ix >= nx) throw ParseError(source, lineno, "too many pixels in row");
      g.set(ix++, iy, tok == "1");
    }
    if (ix != nx)
      throw ParseError(source, lineno,
                       "expected " + std::to_string(nx) + " pixels, got " + std::to_string(ix));
  }
  if (next(line)) throw ParseError(source, lineno, "trailing data after last row");
  return g;
}

inline std::string mask_text(const PixelGrid& g) {
  std::ostringstream out;
  write_mask(out, g);
  return out.str();
}

inline void export_mask(const PixelGrid& g, const std::string& path) {
  g.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  write_mask(out, g);
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

inline PixelGrid import_mask(const std::string& path, const PixelGrid* like = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return read_mask(in, path, like);
}

}  // namespace pixant
