#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace signica {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a, used for naming sub-streams and for content digests.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives a child seed from a parent seed and a list of indices. Streams for
/// distinct (path, coordinate) pairs are decorrelated and independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

/// Named sub-stream of a master seed ("simulate", "optimizer", "subsampling", ...).
inline std::uint64_t substream(std::uint64_t seed, std::string_view name) {
  return derive_seed(seed, {fnv1a(name)});
}

/// Uniform draw on the open interval (0, 1).
inline double open_unit(Engine& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 64>(rng);
    if (u > 0.0 && u < 1.0) return u;
  }
}

}  // namespace signica
