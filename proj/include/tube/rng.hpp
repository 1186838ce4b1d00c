#pragma once

// Deterministic seeded random streams (xoshiro256++ core, splitmix64 seeding).
// Everything random in the library goes through Rng, so a run replays exactly
// for a given master seed regardless of platform or standard library.

#include <cstdint>
#include <cmath>
#include <initializer_list>

namespace tube {

inline constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden64;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Folds a tag into a seed. Used to derive independent streams from one master
// seed (per worker, per replicate, per purpose).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag + kGolden64));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    bool nonzero = false;
    for (auto& word : state_) {
      s = splitmix64(s);
      word = s;
      nonzero |= (word != 0);
    }
    if (!nonzero) state_[0] = kGolden64;  // all-zero state is degenerate
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0,1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0,n), unbiased (rejection on the wraparound band).
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Exp(1) variate.
  double next_exponential() { return -std::log1p(-next_unit()); }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

// Stream for a (master seed, path) address, e.g. {row, reseed, purpose}.
inline Rng derive_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t tag : path) s = mix_seed(s, tag);
  return Rng(s);
}

}  // namespace tube
