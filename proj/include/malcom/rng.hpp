#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace malcom {

// Deterministic random stream. All draws are derived from the raw mt19937_64
// output with fixed arithmetic, so a seed reproduces the same sequence on any
// platform (std::*_distribution is implementation-defined and never used).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = bits();
    } while (x >= limit);
    return x % n;
  }

  int index(std::size_t n) { return static_cast<int>(below(n)); }

  // Standard normal via Box-Muller (one value per call, cached pair).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gumbel(0,1) noise.
  double gumbel();

  // Index sampled proportionally to `weights` (nonnegative, not all zero).
  int categorical(const std::vector<double>& weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Independent child stream; `tag` separates the substreams of one seed.
  Rng derive(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used for vocabulary and config hashes.
std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 1469598103934665603ULL);

// Combines a seed with a tag into a fresh stream seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace malcom
