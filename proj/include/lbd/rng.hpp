#pragma once

#include <cstdint>
#include <random>

namespace lbd {

// splitmix64 finalizer; mixes (seed, stream, index) into independent
// per-sample seeds so results do not depend on evaluation order.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix64(mix64(mix64(seed) ^ (stream * 0xd1342543de82ef95ULL)) ^ index);
}

// Named seed streams. Every consumer of randomness draws from exactly one.
namespace stream {
inline constexpr std::uint64_t kBaseReal = 1;
inline constexpr std::uint64_t kBaseFake = 2;
inline constexpr std::uint64_t kSubReal = 3;
inline constexpr std::uint64_t kSubFake = 4;
inline constexpr std::uint64_t kPoison = 5;
inline constexpr std::uint64_t kEval = 6;
inline constexpr std::uint64_t kTriggerOpt = 7;
inline constexpr std::uint64_t kTrainInit = 8;
inline constexpr std::uint64_t kTrainOrder = 9;
inline constexpr std::uint64_t kAugment = 10;
inline constexpr std::uint64_t kStrip = 11;
inline constexpr std::uint64_t kDiffusion = 12;
inline constexpr std::uint64_t kDefense = 13;
inline constexpr std::uint64_t kWorld = 14;
}  // namespace stream

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0)
      : eng_(derive_seed(seed, stream, index)) {}

  double normal() { return normal_(eng_); }
  double normal(double mean, double sd) { return mean + sd * normal_(eng_); }
  double uniform() { return uniform_(eng_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(eng_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lbd
