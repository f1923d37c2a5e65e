#include "clh3g/rng.hpp"

#include <cmath>

namespace clh3g {

std::vector<size_t> Rng::sample_without_replacement(size_t pool, size_t n) {
  std::vector<size_t> idx(pool);
  for (size_t i = 0; i < pool; ++i) idx[i] = i;
  // Partial Fisher-Yates: first n slots end up as the sample.
  for (size_t i = 0; i < n && i < pool; ++i) {
    size_t j = static_cast<size_t>(
        uniform_int(static_cast<int64_t>(i), static_cast<int64_t>(pool) - 1));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n < pool ? n : pool);
  return idx;
}

uint64_t mix_seed(uint64_t seed, uint64_t step, uint64_t salt) {
  // splitmix64 over the packed inputs
  uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (step + 1)) ^ (salt * 0xbf58476d1ce4e5b9ULL);
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace clh3g
