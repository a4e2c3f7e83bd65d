#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace eigenopt {

/// Seeded random source used by every learner.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the C++ standard,
/// and derives uniform reals and bounded integers from raw 64-bit draws
/// instead of the <random> distributions (whose algorithms are
/// implementation-defined). Runs therefore agree bit-for-bit across standard
/// libraries.
class Rng {
 public:
  static constexpr std::string_view kName = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for the same seed (e.g. evaluation episodes).
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace eigenopt
