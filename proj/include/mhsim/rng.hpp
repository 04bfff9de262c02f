#pragma once

// Integer-state random number generation with a fully specified algorithm, so
// that seeded runs reproduce bit-for-bit on any platform with IEEE doubles.
//
//   * SplitMix64 (Steele, Lea & Flood 2014) for sequential streams: cohort
//     generation, schedules, k-means seeding.
//   * A counter-based generator for the simulation: every draw is a pure
//     function of a key tuple (seed, stream, mother, week, ...), hashed with
//     the SplitMix64 finalizer. Draws never depend on evaluation order.
//
// std:: distributions are avoided on purpose; their output is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace mhsim {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// 64-bit FNV-1a. Used for prompt digests, spec digests and mother-id keys.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// Top 53 bits to a double in [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }
  constexpr std::uint64_t operator()() noexcept { return next(); }
  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

  constexpr double uniform01() noexcept { return to_unit(next()); }

  // Unbiased integer in [0, bound) by Lemire's multiply-and-reject method.
  std::uint64_t uniform_below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  // Index drawn proportionally to non-negative weights.
  std::size_t categorical(const std::vector<double>& weights) noexcept {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) noexcept {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = uniform_below(i);
      std::swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
    }
  }

 private:
  std::uint64_t state_;
};

// Counter-based draws. The key is folded word by word through mix64.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  constexpr std::uint64_t bits(std::initializer_list<std::uint64_t> key) const noexcept {
    std::uint64_t h = mix64(seed_ + kGoldenGamma);
    for (std::uint64_t word : key) h = mix64(h ^ (word + kGoldenGamma));
    return h;
  }

  constexpr double uniform(std::initializer_list<std::uint64_t> key) const noexcept {
    return to_unit(bits(key));
  }

  // Standard normal by Box-Muller over two sub-keys of `key`.
  double normal(std::initializer_list<std::uint64_t> key) const noexcept {
    const std::uint64_t base = bits(key);
    const double u1 = 1.0 - to_unit(mix64(base ^ 0x1ULL));  // (0, 1]
    const double u2 = to_unit(mix64(base ^ 0x2ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
};

// Stream tags keep independent consumers of one seed apart.
namespace stream {
inline constexpr std::uint64_t kGroundTruthInit = 0x6774'0001;
inline constexpr std::uint64_t kGroundTruthStep = 0x6774'0002;
inline constexpr std::uint64_t kPredictNoise = 0x7072'0001;
inline constexpr std::uint64_t kPredictDraw = 0x7072'0002;
inline constexpr std::uint64_t kDispatch = 0x6469'0001;
}  // namespace stream

}  // namespace mhsim
