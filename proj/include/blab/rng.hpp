#pragma once

// Seeded randomness. Every consumer draws from its own named stream derived
// from one 64-bit root seed, so results do not depend on scheduling.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace blab {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of stream (name, index) under a root seed.
inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(root ^ fnv1a(name)) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// mt19937_64 with distribution code kept here rather than in <random>, whose
/// distributions are not specified bit-for-bit across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t root, std::string_view name, std::uint64_t index = 0) : engine_(derive_seed(root, name, index)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n; }

  /// Standard normal by Box-Muller (one value per call).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Lomax (Pareto II) draw with shape alpha: heavy upper tail, support [0, inf).
  double lomax(double alpha) { return std::pow(1.0 - uniform(), -1.0 / alpha) - 1.0; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace blab
