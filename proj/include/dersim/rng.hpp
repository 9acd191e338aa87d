#pragma once

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter, index), so step k can be sampled without replaying
// steps 0..k-1. Bumping the version string is required whenever the mixing
// changes, since recorded schedules depend on it bit for bit.

#include <cstdint>
#include <string_view>

namespace dersim::rng {

inline constexpr std::string_view kGeneratorName = "splitmix64-counter/v1";

enum class Stream : std::uint64_t {
  link_failure = 1,
  instance = 2,
  graph = 3,
};

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t draw(std::uint64_t seed, Stream stream, std::uint64_t counter, std::uint64_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ counter);
  return splitmix64(h ^ index);
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Sequential view over one (seed, stream, counter) key.
class Sequence {
 public:
  constexpr Sequence(std::uint64_t seed, Stream stream, std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), counter_(counter) {}

  constexpr double uniform() { return to_unit(draw(seed_, stream_, counter_, index_++)); }

  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, bound).
  constexpr std::uint64_t below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(bound)) % bound;
  }

 private:
  std::uint64_t seed_;
  Stream stream_;
  std::uint64_t counter_;
  std::uint64_t index_ = 0;
};

}  // namespace dersim::rng
