#pragma once

// Seed derivation and engine-level draws. These avoid std distributions where
// reproducibility across standard libraries matters (sampling, GA decisions).

#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <random>
#include <string>

#include "aberforge/error.hpp"

namespace aberforge {

inline constexpr std::uint64_t kDefaultSeed = 20240613;

// splitmix64 step; derives independent child seeds from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Unbiased integer in [0, n).
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    const unsigned long long s = std::stoull(text, &used, 0);
    if (used == text.size()) return static_cast<std::uint64_t>(s);
  } catch (const std::exception&) {
  }
  throw DomainError("seed '" + text + "' is not an unsigned 64-bit integer");
}

// ABERFORGE_SEED when set; a malformed value is an error, not a silent default.
inline std::optional<std::uint64_t> seed_from_environment() {
  const char* v = std::getenv("ABERFORGE_SEED");
  if (!v || !*v) return std::nullopt;
  return parse_seed(v);
}

}  // namespace aberforge
