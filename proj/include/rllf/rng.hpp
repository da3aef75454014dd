#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace rllf {

// splitmix64; used to derive independent-looking streams from (seed, stream).
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937 make_rng(uint64_t seed, uint64_t stream = 0) {
  return std::mt19937(static_cast<uint32_t>(mix64(mix64(seed) ^ stream)));
}

// Exact engine state as text, for resumable runs.
inline std::string rng_state(const std::mt19937& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void set_rng_state(std::mt19937& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
}

}  // namespace rllf
