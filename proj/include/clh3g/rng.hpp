#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace clh3g {

// Seeded RNG with library-independent draw logic. std::mt19937_64 has a
// pinned bit stream, but the std distributions do not, so bounded ints
// and doubles are derived here to keep runs reproducible across
// standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform on [lo, hi], inclusive. Rejection sampling, no modulo bias.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(engine_());  // full range
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return lo + static_cast<int64_t>(v % span);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (no cached spare; one draw per call).
  double normal() {
    double u = 1.0 - uniform();
    double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586 * v);
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // Sample n distinct indices from [0, pool), order randomized.
  std::vector<size_t> sample_without_replacement(size_t pool, size_t n);

 private:
  std::mt19937_64 engine_;
};

// Derives an independent per-step stream from (seed, step, salt) so a
// resumed run replays the exact draw sequence of an uninterrupted one.
uint64_t mix_seed(uint64_t seed, uint64_t step, uint64_t salt);

}  // namespace clh3g
