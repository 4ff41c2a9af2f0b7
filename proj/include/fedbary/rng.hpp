#pragma once

// Deterministic randomness.  All sampling in the library goes through this
// wrapper so that every emitted artifact is reproducible from the seed alone.
// The engine, the bit-to-double mapping, the normal transform and the child
// stream derivation are all part of the reproducibility contract: changing any
// of them changes generated data, so the identifier below must be bumped if
// they ever do.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace fedbary {

// Identifier recorded in generated files.  "bm1": Box-Muller, two 53-bit
// uniforms per normal deviate, cosine branch only.
inline constexpr const char* kRngVersion = "mt19937_64/bm1";

// SplitMix64 finalizer, used as the 64-bit mix for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent child stream `tag` of a run seed:
//   child_seed(seed, tag) = splitmix64(seed ^ (tag + 1) * 0x9e3779b97f4a7c15).
// Tag assignment is fixed per call site (documented there) so adding a new
// consumer never perturbs existing streams.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ ((tag + 1) * 0x9e3779b97f4a7c15ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform on [0, 1), 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal deviate.  Consumes exactly two engine draws.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).  Modulo of 64 bits; the bias is < 2^-50 for the
  // n used here and determinism matters more than removing it.
  int below(int n) {
    return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
  }

  // k distinct indices from [0, n), returned ascending.  Partial
  // Fisher-Yates; consumes exactly k engine draws.
  std::vector<int> sample_indices(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + below(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fedbary
