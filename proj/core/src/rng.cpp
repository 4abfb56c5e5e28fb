#include "trustrec/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace trustrec {

std::uint64_t SplitMix64::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Reject draws from the incomplete final block of size (2^64 mod n).
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = (*this)();
    if (r >= threshold) return r % n;
  }
}

double SplitMix64::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

SplitMix64 derive_stream(std::string_view component, std::uint64_t master_seed) {
  return SplitMix64(hash_name(component) ^ master_seed);
}

std::vector<std::uint32_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                      SplitMix64& rng) {
  std::vector<std::uint32_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0u);
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::size_t floor_count(double ratio, std::size_t n) {
  const double raw = ratio * static_cast<double>(n);
  if (raw <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(raw + 1e-9));
}

}  // namespace trustrec
