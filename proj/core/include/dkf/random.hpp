#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace dkf {

// Seeded pseudo-random source with a pinned algorithm so generated datasets
// are reproducible across platforms:
//
//   * state:     xoshiro256** (Blackman & Vigna), state words filled from the
//                seed by four successive splitmix64 outputs
//   * uniform:   (next() >> 11) * 2^-53, a double in [0, 1)
//   * gaussian:  Marsaglia polar method; each accepted pair returns the first
//                value and caches the second for the following call
//   * ternary:   floor(3u) - 1 in {-1, 0, 1}
//   * index(n):  high 64 bits of next() * n
//   * poisson:   Knuth multiplication method for rate <= 30, otherwise a
//                rounded normal approximation (clamped at 0)
//
// Not thread-safe; use one instance per caller.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  double uniform();
  double gaussian();
  int ternary();
  std::size_t index(std::size_t n);
  int poisson(double rate);

  // Independent child stream; the parent state is not advanced.
  RandomSource derive(std::uint64_t stream) const;

  // Fisher-Yates permutation of 0..n-1 driven by index().
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> spare_gaussian_;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace dkf
