#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace posefield {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a path of indices,
/// e.g. (seed, scene, view). Distinct paths give unrelated streams.
inline std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (auto p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path = {}) {
  return Rng(stream_seed(seed, path));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

/// Stream tags, so call sites never reuse a path by accident.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainStep = 2;
inline constexpr std::uint64_t kRenormalize = 3;
inline constexpr std::uint64_t kScene = 4;
inline constexpr std::uint64_t kView = 5;
inline constexpr std::uint64_t kSplit = 6;
inline constexpr std::uint64_t kNoise = 7;
inline constexpr std::uint64_t kTrunk = 8;
inline constexpr std::uint64_t kHeads = 9;
inline constexpr std::uint64_t kDecoder = 10;
}  // namespace streams

}  // namespace posefield
