#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace trustrec {

// SplitMix64 generator. Every random decision in the library draws from one
// of these, so a (component, seed) pair fully determines the stream
// regardless of platform or standard library.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased (rejection on the top remainder).
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// 64-bit FNV-1a of a component name.
std::uint64_t hash_name(std::string_view name);

// Stream for a named component: SplitMix64(hash(name) XOR master_seed).
SplitMix64 derive_stream(std::string_view component, std::uint64_t master_seed);

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::span<T> values, SplitMix64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k, SplitMix64& rng);

// floor(ratio * n) with a guard against representation error such as
// 0.29 * 100 evaluating to 28.999999999999996.
std::size_t floor_count(double ratio, std::size_t n);

}  // namespace trustrec
