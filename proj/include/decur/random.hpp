#ifndef DECUR_RANDOM_HPP
#define DECUR_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace decur {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Order-sensitive mix of a base seed with stream coordinates, e.g.
/// derive_seed(seed, {epoch, step}) for per-step augmentation streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(seed);
  for (auto c : coords)
    h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ull));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> coords = {}) {
  return Rng(derive_seed(seed, coords));
}

} // namespace decur

#endif
