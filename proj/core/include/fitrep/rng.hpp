#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fitrep {

// splitmix64 step; also used as a finalizer for hashing.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable 64-bit hash of raw bytes. Not cryptographic. The bit pattern is part
// of the on-disk store format, so it must never change across platforms.
inline uint64_t hash64(std::string_view bytes, uint64_t seed = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  uint64_t s = h;
  return splitmix64(s);
}

// Deterministic generator (xoshiro256**) with identical output on every
// platform. std::mt19937 plus std:: distributions are not portable across
// standard libraries, so all randomness in the pipeline goes through this.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
  }

  uint64_t next_u64() {
    auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    uint64_t result = rotl(s_[1] * 5, 7) * 9;
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return static_cast<float>((next_u64() >> 40) * 0x1.0p-24); }

  // Uniform in [0, n). n must be > 0.
  size_t next_index(size_t n) {
    return static_cast<size_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller (single draw per call, second discarded
  // to keep the stream layout simple).
  double next_gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_index(i);
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream; forks with distinct tags never collide.
  Rng fork(uint64_t tag) const {
    uint64_t mix = s_[0] ^ (s_[3] * 0x9e3779b97f4a7c15ULL);
    uint64_t sm = mix ^ splitmix64(tag);
    return Rng(splitmix64(sm));
  }

 private:
  uint64_t s_[4];
};

inline double Rng::next_gaussian() {
  double u1 = 0.0;
  while (u1 <= 1e-300) u1 = next_double();
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

}  // namespace fitrep
