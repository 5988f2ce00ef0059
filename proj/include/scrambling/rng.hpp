#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace scrambling {

/// Engine used by every stochastic routine. Callers own one per worker.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_label(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stream for task `index` under `label`: hash(seed, label, index).
/// Independent of how tasks are scheduled across workers.
inline Rng make_stream(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(hash_label(label)));
  s = splitmix64(s ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace scrambling
