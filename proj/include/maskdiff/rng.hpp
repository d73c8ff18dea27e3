#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace maskdiff {

// Counter-derived splitmix64 stream. Streams are cheap to construct from a
// (seed, a, b) triple, which keeps particle trajectories reproducible
// regardless of scheduling: stream(seed, particle, step) is the same on any
// number of worker threads.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Index sampled proportionally to the nonnegative entries of w.
  int categorical(const std::vector<double>& w, double total) {
    if (!(total > 0.0)) throw std::invalid_argument("categorical: total must be > 0");
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      u -= w[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
  }

 private:
  std::uint64_t state_;
};

inline SplitMix64 derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = SplitMix64::mix(seed ^ 0x8f1bbcdcbfa53e0bull);
  s = SplitMix64::mix(s ^ a);
  s = SplitMix64::mix(s ^ (b + 0xd6e8feb86659fd93ull));
  return SplitMix64(s);
}

}  // namespace maskdiff
