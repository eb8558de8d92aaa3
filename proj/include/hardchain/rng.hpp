#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace hardchain {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream keyed by (seed, stream id). Output k of the
/// stream is a pure function of (seed, stream, k), so any stream can be
/// replayed independently of how other streams were consumed.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(splitmix64(splitmix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_;
};

/// Stream ids used across the library; kept distinct so unrelated draws never
/// share a stream.
namespace streams {
inline constexpr std::uint64_t kHaar = 1;
inline constexpr std::uint64_t kBlocks = 2;
inline constexpr std::uint64_t kSlots = 3;
inline constexpr std::uint64_t kQuery = 1ULL << 40;  // + ledger index
inline constexpr std::uint64_t kVerify = 1ULL << 41;
inline constexpr std::uint64_t kBench = 1ULL << 42;
inline constexpr std::uint64_t kGrover = 1ULL << 43;
}  // namespace streams

}  // namespace hardchain
