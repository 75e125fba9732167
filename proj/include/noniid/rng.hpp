#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace noniid {

using Rng = std::mt19937_64;

// splitmix64 finalizer; good avalanche, used only to spread seed material.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-trial stream = f(master seed, tag, trial index). Streams are stable
// across worker counts, so parallel runs reproduce serial output.
inline Rng derive_rng(std::uint64_t master, std::uint64_t salt,
                      std::uint64_t index = 0) {
  std::uint64_t s = mix64(master ^ mix64(salt) ^ mix64(index * 0x9e3779b97f4a7c15ULL + 1));
  return Rng(s);
}

inline Rng derive_rng(std::uint64_t master, std::string_view tag,
                      std::uint64_t index = 0) {
  return derive_rng(master, hash_tag(tag), index);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Draw an index from an (unnormalized) nonnegative weight vector.
inline std::size_t sample_index(Rng& rng, const std::vector<double>& w) {
  double total = 0;
  for (double x : w) total += x;
  double u = uniform01(rng) * total;
  double acc = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return i;
  }
  return w.empty() ? 0 : w.size() - 1;
}

}  // namespace noniid
