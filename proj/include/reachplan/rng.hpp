#pragma once

// Deterministic RNG streams. Every episode gets its own engine derived from
// (run seed, episode id), so batches are reproducible byte-for-byte no matter
// how work is split across threads. Gaussians use an explicit Box-Muller so
// draws do not depend on the standard library's distribution internals.

#include <cmath>
#include <cstdint>
#include <random>

namespace reachplan {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Rng {
  std::mt19937_64 eng;

  explicit Rng(std::uint64_t seed) : eng(splitmix64(seed)) {}

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

  double normal(double mean, double var) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + std::sqrt(var) * z;
  }

  // index into a discrete weight vector (weights need not be normalized)
  std::size_t pick_weighted(const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return w.empty() ? 0 : w.size() - 1;
  }
};

inline Rng derive_stream(std::uint64_t seed, std::uint64_t episode_id) {
  return Rng(splitmix64(seed) ^ splitmix64(episode_id * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL));
}

}  // namespace reachplan
