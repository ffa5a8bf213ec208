#include "habi/rng.hpp"

#include <Eigen/Core>
#include <numbers>

namespace habi {

void fill_standard_normal(float* out, std::size_t n, std::mt19937_64& rng) {
  const auto pairs = static_cast<Eigen::Index>((n + 1) / 2);
  Eigen::ArrayXf u1(pairs), u2(pairs);
  constexpr float kScale = 1.0f / 16777216.0f;
  for (Eigen::Index i = 0; i < pairs; ++i) {
    const std::uint64_t w = rng();
    // u1 in (0, 1) so the log stays finite; u2 in [0, 1).
    u1[i] = (static_cast<float>((w >> 40) & 0xFFFFFF) + 0.5f) * kScale;
    u2[i] = static_cast<float>((w >> 8) & 0xFFFFFF) * kScale;
  }
  const Eigen::ArrayXf r = (-2.0f * u1.log()).sqrt();
  const Eigen::ArrayXf theta = (2.0f * std::numbers::pi_v<float>) * u2;
  const Eigen::ArrayXf c = r * theta.cos(), s = r * theta.sin();
  for (Eigen::Index i = 0; i < pairs; ++i) {
    out[2 * i] = c[i];
    if (static_cast<std::size_t>(2 * i + 1) < n) out[2 * i + 1] = s[i];
  }
}

}  // namespace habi
