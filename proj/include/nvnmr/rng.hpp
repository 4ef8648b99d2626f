#pragma once

// Deterministic, splittable random streams. One master seed per experiment;
// every stochastic component derives its own sub-seed from
// (master, component tag, index), so ensemble members can be generated in
// any order (or in parallel) with bit-identical results.

#include <cstdint>
#include <string_view>

#include <cmath>

namespace nvnmr {

// SplitMix64 (Steele, Lea, Flood 2014). Small state, passes BigCrush as a
// mixer, and trivially splittable.
struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Sub-seed scheme: splitmix-advance the master xor the component-tag hash,
// then fold in the member index. Documented contract; changing it changes
// every seeded output.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                                 std::uint64_t index) {
  SplitMix64 mix(master ^ fnv1a64(component));
  const std::uint64_t base = mix.next();
  SplitMix64 leaf(base + 0x9e3779b97f4a7c15ULL * (index + 1));
  return leaf.next();
}

// Standard normal deviates by Box-Muller on a SplitMix64 stream. Hand-rolled
// rather than std::normal_distribution so sequences are identical across
// standard libraries.
struct GaussianStream {
  SplitMix64 rng;
  double spare = 0.0;
  bool has_spare = false;

  explicit GaussianStream(std::uint64_t seed) : rng(seed) {}

  double next() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - rng.uniform01();
    const double u2 = rng.uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare = r * std::sin(a);
    has_spare = true;
    return r * std::cos(a);
  }
};

}  // namespace nvnmr
