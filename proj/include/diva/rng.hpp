#ifndef DIVA_RNG_HPP
#define DIVA_RNG_HPP

#include <cmath>
#include <cstdint>

namespace diva {

// xoshiro256++ seeded through splitmix64. Fixed algorithm so synthetic
// fixtures reproduce across builds; no std::random distributions anywhere
// (their output is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next() {
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

  // uniform in [0, 1), 53-bit mantissa
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1], safe for log()
  double uniform_pos() { return double((next() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; consumes exactly two words per draw
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // unbiased integer in [0, n), Lemire's multiply-with-rejection
  std::uint64_t bounded(std::uint64_t n) {
    std::uint64_t x = next();
    __uint128_t m = __uint128_t(x) * __uint128_t(n);
    std::uint64_t l = std::uint64_t(m);
    if (l < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (l < threshold) {
        x = next();
        m = __uint128_t(x) * __uint128_t(n);
        l = std::uint64_t(m);
      }
    }
    return std::uint64_t(m >> 64);
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
};

}  // namespace diva

#endif
