#pragma once

// Closed-form rectangular microstrip patch model (cavity model with
// Hammerstad's fringing extension) and the isolation-improvement metric.

#include <cmath>
#include <stdexcept>

#include "pixant/emcore.hpp"
#include "pixant/sparam.hpp"

namespace pixant {

inline constexpr double kDesignFrequency = 5.4e9;
inline constexpr double kGpsFrequency = 1.57e9;

struct PatchDims {
  double W = 0.0;
  double L = 0.0;
  double delta_L = 0.0;
  double eps_eff = 1.0;
};

inline double effective_permittivity(double W, double eps_r, double h) {
  return (eps_r + 1.0) / 2.0 + (eps_r - 1.0) / 2.0 / std::sqrt(1.0 + 12.0 * h / W);
}

inline double fringing_extension(double W, double eps_eff, double h) {
  const double u = W / h;
  return 0.412 * h * (eps_eff + 0.3) * (u + 0.264) / ((eps_eff - 0.258) * (u + 0.8));
}

inline PatchDims patch_model(double W, double L, double eps_r, double h) {
  if (!(W > 0.0) || !(L > 0.0) || !(h > 0.0) || !(eps_r >= 1.0))
    throw std::invalid_argument("patch model: W, L, h must be positive and eps_r >= 1");
  PatchDims d;
  d.W = W;
  d.L = L;
  d.eps_eff = effective_permittivity(W, eps_r, h);
  d.delta_L = fringing_extension(W, d.eps_eff, h);
  return d;
}

/// Dominant-mode resonance along L.
inline double hammerstad_resonance(double W, double L, double eps_r, double h) {
  const PatchDims d = patch_model(W, L, eps_r, h);
  return phys::c0 / (2.0 * (L + 2.0 * d.delta_L) * std::sqrt(d.eps_eff));
}

/// Standard width rule, then L by bisection until the modelled resonance is
/// within 1 kHz of f0.
inline PatchDims design_standard_patch(double f0, double eps_r, double h) {
  if (!(f0 > 0.0)) throw std::invalid_argument("design_standard_patch: f0 must be positive");
  if (!(eps_r >= 1.0) || !(h > 0.0)) throw std::invalid_argument("design_standard_patch: invalid stack");
  const double W = phys::c0 / (2.0 * f0) * std::sqrt(2.0 / (eps_r + 1.0));
  double lo = 1e-9 * phys::c0 / f0;
  double hi = phys::c0 / (2.0 * f0);
  auto fr = [&](double L) { return hammerstad_resonance(W, L, eps_r, h); };
  if (!(fr(lo) > f0 && fr(hi) < f0))
    throw std::runtime_error("design_standard_patch: resonance not bracketed; substrate too thick for f0");
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = fr(mid);
    if (std::abs(f - f0) <= 1e3) return patch_model(W, mid, eps_r, h);
    (f > f0 ? lo : hi) = mid;
  }
  throw std::runtime_error("design_standard_patch: bisection did not converge");
}

/// S21 in dB of the baseline minus that of the optimized design at f0.
inline double isolation_improvement(const SParamSet& baseline, const SParamSet& optimized, double f0) {
  for (const SParamSet* s : {&baseline, &optimized})
    if (s->freqs.empty() || f0 < s->freqs.front() || f0 > s->freqs.back())
      throw std::invalid_argument("isolation_improvement: f0 outside sweep");
  return s21_db(baseline, f0) - s21_db(optimized, f0);
}

}  // namespace pixant
