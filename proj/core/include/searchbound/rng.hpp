#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace searchbound {

inline constexpr uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr uint64_t mix_bytes(uint64_t h, std::string_view s) {
  // FNV-1a fold of the bytes into an existing hash value.
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr uint64_t mix_u64(uint64_t h, uint64_t v) {
  uint64_t state = h ^ (v + 0x9e3779b97f4a7c15ULL);
  return splitmix64(state);
}

// Stream id for a single rollout: independent of worker scheduling, so results
// do not depend on which thread runs which question.
inline constexpr uint64_t derive_seed(uint64_t master, std::string_view label,
                                      uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = master;
  h = splitmix64(h);
  h = mix_bytes(h, label);
  h = mix_u64(h, a);
  h = mix_u64(h, b);
  h = mix_u64(h, c);
  return h;
}

// xoshiro256++, seeded through splitmix64. Self-contained so that streams are
// identical across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Unbiased uniform draw in [0, n) via rejection.
  uint64_t below(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  size_t index(size_t n) { return static_cast<size_t>(below(n)); }

  double next_double() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  static constexpr uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  uint64_t s_[4];
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = rng.index(i);
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace searchbound
