#pragma once

#include <cstdint>
#include <string_view>

namespace dqrp {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// FNV-1a hash of a stream label, used to name sub-streams.
constexpr std::uint64_t label_hash(std::string_view label) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Derive an independent sub-seed from a parent seed, a stream label and an index.
///
/// derive_seed(s, label, i) = mix64(mix64(s ^ fnv1a(label)) + i). Every random
/// stream in the toolkit (network init, xi draws, epoch shuffles, data, test
/// draws, replications) is obtained this way, so inserting a new consumer
/// never shifts the values seen by an existing one.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(seed ^ label_hash(label)) + index);
}

/// Counter-based 64-bit generator: the k-th output is mix64(key + k * golden).
///
/// State is just (key, counter), so a stream can be reproduced or skipped
/// ahead without replaying it.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t next_u64() noexcept {
    return mix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++);
  }

  /// Uniform on the open interval (0, 1); never returns 0 or 1.
  constexpr double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on (lo, hi).
  constexpr double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform_open();
  }

  /// Uniform integer in [0, bound) by Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) {
      return 0;
    }
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next_u64();
      __extension__ using u128 = unsigned __int128;
      const u128 prod = static_cast<u128>(r) * bound;
      if (static_cast<std::uint64_t>(prod) >= threshold) {
        return static_cast<std::uint64_t>(prod >> 64);
      }
    }
  }

  constexpr std::uint64_t counter() const noexcept { return counter_; }
  constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dqrp
