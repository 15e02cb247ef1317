#pragma once

#include <cstdint>
#include <vector>

namespace cafe {

// Weyl increment of the splitmix64 generator.
inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// The splitmix64 finalizer: a bijective scramble of 64-bit state.
std::uint64_t scramble64(std::uint64_t z);

// Counter-based generator keyed by (seed, replicate, stream). Streams with
// different keys are statistically independent, and a stream's output depends
// only on its key, never on how many other streams exist or in which order
// they run. That makes parallel replicates bit-reproducible.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream);

  std::uint64_t next_u64();

  // Strictly inside (0, 1): safe to feed through an inverse CDF.
  double uniform01();
  double uniform(double lo, double hi);
  double normal(double mean, double sd);
  int bernoulli(double p);

  // Unbiased integer in [0, bound); bound must be positive.
  std::uint64_t next_below(std::uint64_t bound);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> shuffled_indices(std::size_t n);

 private:
  std::uint64_t state_;
};

}  // namespace cafe
