#pragma once

// Deterministic random streams.
//
// The reproducibility contract — identical reports across machines, stdlib
// versions, and thread counts — rules out std::shuffle and the <random>
// distributions, whose outputs are implementation-defined. Everything here
// is a fixed algorithm: splitmix64 for raw bits, Lemire rejection for
// unbiased bounded integers, Fisher-Yates for shuffles, Box-Muller for
// normals. Streams for (iteration, round) or (trial, column) work are
// derived by hashing the indices into the master seed, so any unit of work
// can be recomputed in isolation and parallel schedules cannot change
// results.

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <vector>

namespace mps {

// Finalizer from splitmix64; bijective on 64-bit words.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Folds one stream coordinate into a seed. Chained calls give independent
// streams for tuples like (seed, iteration, round).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t word) {
  return mix64(seed ^ (word + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2)));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                           std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // Uniform double in [0, 1), 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Lemire multiply-shift with rejection; exact
  // uniformity with no modulo in the hot path.
  std::uint64_t bounded(std::uint64_t n) {
    unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) *
            static_cast<unsigned __int128>(n);
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller (the polar-free trig form keeps the
  // consumption pattern fixed: exactly two uniforms per pair of normals).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// In-place Fisher-Yates. Consumes exactly n-1 bounded draws for n >= 2,
// always high-index first, so independent implementations can replay the
// exact permutation from the same stream.
inline void shuffle(double* values, std::size_t n, Rng& rng) {
  for (std::size_t j = n - 1; j > 0; --j) {
    const auto k = static_cast<std::size_t>(rng.bounded(j + 1));
    const double tmp = values[j];
    values[j] = values[k];
    values[k] = tmp;
  }
}

inline void shuffle(std::vector<double>& values, Rng& rng) {
  if (values.size() > 1) shuffle(values.data(), values.size(), rng);
}

}  // namespace mps
