#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace pixant {

/// Engine used for every stochastic decision in the library. The Mersenne
/// twister's output sequence is fixed by the standard, so together with
/// `uniform01` results are reproducible across standard libraries.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Seeds an independent stream `stream` from a master seed.
inline Rng make_stream(std::uint64_t master_seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return Rng(seq);
}

/// SplitMix64 finalizer; used to derive per-particle grid seeds.
inline std::uint64_t mix_seed(std::uint64_t master_seed, std::uint64_t stream) {
  std::uint64_t z = master_seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

inline Rng rng_from_state(const std::string& state) {
  Rng rng;
  std::istringstream in(state);
  in >> rng;
  return rng;
}

}  // namespace pixant
