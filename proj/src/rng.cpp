#include "cafe/rng.hpp"

#include <limits>
#include <stdexcept>

#include "cafe/numerics.hpp"

namespace cafe {

std::uint64_t scramble64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t replicate,
                     std::uint64_t stream)
    : state_(scramble64(
          scramble64(scramble64(seed + kGoldenGamma) + replicate) + stream)) {}

std::uint64_t RngStream::next_u64() {
  state_ += kGoldenGamma;
  return scramble64(state_);
}

double RngStream::uniform01() {
  // 53 random bits, offset half a step so 0 and 1 are unreachable.
  return double(next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double RngStream::normal(double mean, double sd) {
  return mean + sd * num::normal_quantile(num::Probability(uniform01()));
}

int RngStream::bernoulli(double p) { return uniform01() < p ? 1 : 0; }

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be > 0");
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % bound;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % bound;
}

std::vector<std::size_t> RngStream::shuffled_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::size_t(next_below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace cafe
