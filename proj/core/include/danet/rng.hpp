#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace danet {

// Deterministic, serializable random stream (xoshiro256++ seeded via
// splitmix64). std::mt19937 distributions vary across standard library
// implementations; training reproducibility and checkpoint resume need a
// stream whose full state is four words plus the Box-Muller spare.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
    has_spare_ = false;
    spare_ = 0.0;
  }

  // Derives an independent stream for a named sub-purpose.
  Rng fork(std::uint64_t stream_tag) const {
    std::uint64_t x = state_[0] ^ (state_[2] + 0x9e3779b97f4a7c15ULL * (stream_tag + 1));
    return Rng(x);
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

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Lemire's multiply-shift; deterministic and unbiased.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t l = static_cast<std::uint64_t>(m);
    if (l < n) {
      std::uint64_t threshold = (0 - n) % n;
      while (l < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        l = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Full stream state: four state words, spare flag, spare value bits.
  std::array<std::uint64_t, 6> serialize() const {
    std::uint64_t spare_bits;
    static_assert(sizeof(spare_bits) == sizeof(spare_));
    __builtin_memcpy(&spare_bits, &spare_, sizeof(spare_bits));
    return {state_[0], state_[1], state_[2], state_[3],
            has_spare_ ? 1ULL : 0ULL, spare_bits};
  }

  static Rng deserialize(const std::array<std::uint64_t, 6>& words) {
    Rng rng(0);
    rng.state_ = {words[0], words[1], words[2], words[3]};
    rng.has_spare_ = words[4] != 0;
    __builtin_memcpy(&rng.spare_, &words[5], sizeof(rng.spare_));
    return rng;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Fixed tags for the sub-streams derived from the master seed.
namespace stream_tag {
inline constexpr std::uint64_t kEpisode = 1;
inline constexpr std::uint64_t kSampler = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kEncoderInit = 4;
inline constexpr std::uint64_t kHeadInit = 5;
inline constexpr std::uint64_t kSynth = 6;
}  // namespace stream_tag

}  // namespace danet
