#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace habi {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent seed for sub-stream `stream`, item `index` of a run seeded with `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index);
}

/// Fills out[0..n) with standard normal draws (Box-Muller, two 24-bit
/// uniforms per 64-bit word, transcendentals vectorized). Used on the
/// per-decision paths, where std::normal_distribution dominated the cost.
void fill_standard_normal(float* out, std::size_t n, std::mt19937_64& rng);

}  // namespace habi
