#pragma once

// Keyed, counter-based random streams.
//
// Every random draw in the simulator comes from a Stream addressed by
// (master_seed, scope, a, b). The stream key is a SplitMix64 hash chain over
// those four values; the i-th output of a stream is
//
//     mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
//
// i.e. SplitMix64 run from state `key`. Because output i depends only on the
// key and the counter, any device/round/miner stream can be regenerated in
// isolation and in any order. Distributions are implemented here rather than
// taken from <random> so that draws are identical across standard libraries.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace fogml {

enum class Scope : std::uint64_t {
  kInit = 1,
  kData = 2,
  kPartition = 3,
  kLocalTrain = 4,
  kEstimate = 5,
  kServer = 6,
  kMinerSelect = 7,
  kMinerAssign = 8,
  kPow = 9,
  kSdi = 10,
  kCompress = 11,
  kSynthesize = 12,
  kSeeds = 13,
  kSplit = 14,
  kTest = 15,
};

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

__extension__ typedef unsigned __int128 uint128;

class Stream {
 public:
  using result_type = std::uint64_t;
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  constexpr explicit Stream(std::uint64_t key = 0) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform01() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform01();
  }

  /// Uniform integer in [0, n). Lemire's multiply-shift with rejection.
  std::uint64_t uniform_index(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    uint128 m = static_cast<uint128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<uint128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) noexcept {
    return mean + stddev * normal();
  }

  double exponential(double rate) noexcept {
    return -std::log1p(-uniform01()) / rate;
  }

  template <class T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

constexpr std::uint64_t stream_key(std::uint64_t master, Scope scope,
                                   std::uint64_t a = 0,
                                   std::uint64_t b = 0) noexcept {
  std::uint64_t k = mix64(master + Stream::kGamma);
  k = mix64(k ^ (static_cast<std::uint64_t>(scope) * Stream::kGamma));
  k = mix64(k ^ (a + 0x632BE59BD9B4E019ULL));
  k = mix64(k ^ (b + 0xD1B54A32D192ED03ULL));
  return k;
}

inline Stream make_stream(std::uint64_t master, Scope scope,
                          std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
  return Stream(stream_key(master, scope, a, b));
}

}  // namespace fogml
