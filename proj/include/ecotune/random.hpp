#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ecotune {

// All randomness in the project flows through these helpers instead of
// std::uniform_*_distribution, whose output is implementation-defined.
// Trial logs replay bit-exactly only if every draw is reproducible.
using Rng = std::mt19937_64;

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream `stream` of a root seed. Streams are stable under
// reordering, so trial i draws the same numbers no matter when it runs.
inline Rng make_rng(std::uint64_t root_seed, std::uint64_t stream) {
  return Rng(mix64(root_seed ^ mix64(stream)));
}

inline double unit_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + unit_real(rng) * (hi - lo);
}

// Inclusive on both ends.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<std::int64_t>(rng());
  // Debiased multiply-shift (Lemire).
  std::uint64_t x = rng();
  unsigned __int128 m = static_cast<unsigned __int128>(x) * span;
  auto lowbits = static_cast<std::uint64_t>(m);
  if (lowbits < span) {
    const std::uint64_t threshold = -span % span;
    while (lowbits < threshold) {
      x = rng();
      m = static_cast<unsigned __int128>(x) * span;
      lowbits = static_cast<std::uint64_t>(m);
    }
  }
  return lo + static_cast<std::int64_t>(m >> 64);
}

// FNV-1a, used to derive deterministic sub-seeds from structured keys.
inline std::uint64_t hash_bytes(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ull) {
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ mix64(v));
}

// Uniform in [0,1) derived from a hash value rather than an Rng.
inline double hash_unit(std::uint64_t h) {
  return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
}

}  // namespace ecotune
