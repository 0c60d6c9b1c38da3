#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "pixant/emcore.hpp"
#include "pixant/error.hpp"

namespace pixant {

using cplx = std::complex<double>;

/// 2x2 scattering matrix, s[r][c] = S_(r+1)(c+1).
using SMatrix = std::array<std::array<cplx, 2>, 2>;

struct SParamSet {
  std::vector<double> freqs;  // Hz, strictly ascending
  std::vector<SMatrix> s;
  double z0 = 50.0;

  std::size_t size() const { return freqs.size(); }

  void validate() const {
    if (freqs.size() != s.size()) throw std::invalid_argument("sparam set: one matrix per frequency required");
    if (!(z0 > 0.0)) throw std::invalid_argument("sparam set: z0 must be positive");
    for (std::size_t n = 1; n < freqs.size(); ++n)
      if (!(freqs[n] > freqs[n - 1])) throw std::invalid_argument("sparam set: frequencies must ascend strictly");
  }
};

struct Band {
  double fmin = 3e9;
  double fmax = 8e9;
};

/// Linear grid with inclusive endpoints.
inline std::vector<double> linear_grid(Band band, std::size_t n) {
  if (n < 1) throw std::invalid_argument("linear_grid: need at least one point");
  if (!(band.fmax >= band.fmin)) throw std::invalid_argument("linear_grid: fmax < fmin");
  if (n == 1) return {band.fmin};
  std::vector<double> f(n);
  for (std::size_t k = 0; k < n; ++k)
    f[k] = band.fmin + (band.fmax - band.fmin) * static_cast<double>(k) / static_cast<double>(n - 1);
  return f;
}

inline constexpr double kDbFloor = -200.0;

inline double db_mag(cplx s) {
  const double m = std::abs(s);
  if (m == 0.0) return kDbFloor;
  return std::max(kDbFloor, 20.0 * std::log10(m));
}

namespace detail {

/// Spectrum at `f` of samples taken at (n + 1/2) dt.
inline cplx dft_at(const std::vector<double>& x, double dt, double f) {
  const double w = -2.0 * std::numbers::pi * f * dt;
  // Phasor recurrence with periodic re-seeding to bound rounding drift.
  cplx acc{0.0, 0.0};
  const cplx step = std::polar(1.0, w);
  cplx ph = std::polar(1.0, 0.5 * w);
  for (std::size_t n = 0; n < x.size(); ++n) {
    if ((n & 1023u) == 0) ph = std::polar(1.0, w * (static_cast<double>(n) + 0.5));
    acc += x[n] * ph;
    ph *= step;
  }
  return acc * dt;
}

}  // namespace detail

/// Scattering parameters from one run per excited port. Wave amplitudes use
/// the lumped-port convention a = (V + Z0 I) / (2 sqrt Z0),
/// b = (V - Z0 I) / (2 sqrt Z0); the incident wave at the driven port is
/// rebuilt from the recorded source waveform and the source resistance.
inline SParamSet extract_sparams(const std::vector<TimeSeries>& runs, Band band, std::size_t nfreq) {
  if (runs.size() != 2) throw std::invalid_argument("extract_sparams: need one run per port of a two-port");
  for (const auto& r : runs) {
    if (r.port_count() != 2) throw std::invalid_argument("extract_sparams: two-port runs only");
    if (r.dt != runs[0].dt) throw std::invalid_argument("extract_sparams: runs use different time steps");
    if (r.z0 != runs[0].z0) throw std::invalid_argument("extract_sparams: runs use different port impedances");
  }
  if (runs[0].active_port == runs[1].active_port)
    throw std::invalid_argument("extract_sparams: both runs excite the same port");
  for (const auto& r : runs) {
    if (!r.converged)
      throw AccuracyError("extract_sparams: port " + std::to_string(r.active_port) +
                          " run not decayed (trailing energy ratio " + std::to_string(r.trailing_ratio) + ")");
    if (r.pulse.relative_spectrum(band.fmin) < 0.1 || r.pulse.relative_spectrum(band.fmax) < 0.1)
      throw std::invalid_argument("extract_sparams: band lies outside the -20 dB excitation spectrum");
  }
  if (runs[0].z0[0] != runs[0].z0[1])
    throw std::invalid_argument("extract_sparams: ports must share one reference impedance");

  SParamSet out;
  out.z0 = runs[0].z0[0];
  out.freqs = linear_grid(band, nfreq);
  out.s.assign(out.freqs.size(), SMatrix{});
  const double z0 = out.z0;
  const double norm = 2.0 * std::sqrt(z0);

  for (const auto& r : runs) {
    const auto col = static_cast<std::size_t>(r.active_port - 1);
    const double rs = r.rs[col];
    for (std::size_t k = 0; k < out.freqs.size(); ++k) {
      const double f = out.freqs[k];
      const cplx vsrc = detail::dft_at(r.source, r.dt, f);
      const cplx i_drv = detail::dft_at(r.i[col], r.dt, f);
      const cplx a = (vsrc + (z0 - rs) * i_drv) / norm;
      for (std::size_t row = 0; row < 2; ++row) {
        const cplx v = detail::dft_at(r.v[row], r.dt, f);
        const cplx i = row == col ? i_drv : detail::dft_at(r.i[row], r.dt, f);
        const cplx b = (v - z0 * i) / norm;
        out.s[k][row][col] = b / a;
      }
    }
  }
  return out;
}

/// Complex S_(row+1)(col+1) at `f`, linearly interpolated between samples.
inline cplx sparam_at(const SParamSet& set, int row, int col, double f) {
  if (set.freqs.empty()) throw std::invalid_argument("sparam_at: empty sweep");
  if (f < set.freqs.front() || f > set.freqs.back())
    throw std::invalid_argument("sparam_at: frequency outside sweep");
  const auto r = static_cast<std::size_t>(row), c = static_cast<std::size_t>(col);
  const auto hi = std::lower_bound(set.freqs.begin(), set.freqs.end(), f);
  const auto k = static_cast<std::size_t>(hi - set.freqs.begin());
  if (set.freqs[k] == f || k == 0) return set.s[k][r][c];
  const double t = (f - set.freqs[k - 1]) / (set.freqs[k] - set.freqs[k - 1]);
  return (1.0 - t) * set.s[k - 1][r][c] + t * set.s[k][r][c];
}

inline double s11_db(const SParamSet& set, double f) { return db_mag(sparam_at(set, 0, 0, f)); }
inline double s21_db(const SParamSet& set, double f) { return db_mag(sparam_at(set, 1, 0, f)); }

struct Resonance {
  double freq = 0.0;
  double db = 0.0;
  std::size_t index = 0;
};

/// Minimum of |S_pp| over the sweep; ties go to the lowest frequency.
inline Resonance resonance_min(const SParamSet& set, int port) {
  if (set.freqs.empty()) throw std::invalid_argument("resonance_min: empty sweep");
  if (port < 1 || port > 2) throw std::invalid_argument("resonance_min: port must be 1 or 2");
  const auto p = static_cast<std::size_t>(port - 1);
  std::size_t best = 0;
  for (std::size_t k = 1; k < set.freqs.size(); ++k)
    if (std::abs(set.s[k][p][p]) < std::abs(set.s[best][p][p])) best = k;
  return {set.freqs[best], db_mag(set.s[best][p][p]), best};
}

struct SanityReport {
  double passivity_max = 0.0;   // max_f |S11|^2 + |S21|^2 (worst column)
  double reciprocity_max = 0.0; // max_f |S21 - S12|
  double passivity_limit = 0.0;
  double reciprocity_limit = 0.02;
  bool passivity_ok = true;
  bool reciprocity_ok = true;

  bool ok() const { return passivity_ok && reciprocity_ok; }
};

inline SanityReport sanity_check(const SParamSet& set, bool lossless) {
  SanityReport rep;
  rep.passivity_limit = lossless ? 1.02 : 1.0 + 1e-3;
  for (const auto& m : set.s) {
    const double col1 = std::norm(m[0][0]) + std::norm(m[1][0]);
    const double col2 = std::norm(m[0][1]) + std::norm(m[1][1]);
    rep.passivity_max = std::max({rep.passivity_max, col1, col2});
    rep.reciprocity_max = std::max(rep.reciprocity_max, std::abs(m[1][0] - m[0][1]));
  }
  rep.passivity_ok = rep.passivity_max <= rep.passivity_limit;
  rep.reciprocity_ok = rep.reciprocity_max <= rep.reciprocity_limit;
  return rep;
}

}  // namespace pixant
