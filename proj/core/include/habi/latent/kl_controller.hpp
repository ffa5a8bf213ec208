#pragma once

#include <cmath>

namespace habi::latent {

/// Adaptive KL weight. log(beta) moves by lr_beta times the log10 gap between
/// the observed KL and its target, so beta grows while KL is above target and
/// shrinks while below, and is clamped to [log_beta_min, log_beta_max].
struct KlWeightController {
  double log_beta = 0.0;
  double target_kl = 1.0;
  double lr_beta = 0.01;
  double log_beta_min = std::log(1e-4);
  double log_beta_max = std::log(1e4);

  double beta() const { return std::exp(log_beta); }
  bool at_clamp() const { return log_beta <= log_beta_min || log_beta >= log_beta_max; }

  /// observed_kl is floored at 1e-8 before taking the log.
  void update(double observed_kl);

  /// Throws ConfigError unless target_kl > 0, lr_beta > 0, min < max and log_beta is in range.
  void validate() const;
};

/// Exponential moving average; the first sample initializes the value.
struct MovingAverage {
  double decay = 0.99;
  double value = 0.0;
  bool initialized = false;

  double push(double x) {
    value = initialized ? decay * value + (1.0 - decay) * x : x;
    initialized = true;
    return value;
  }
};

}  // namespace habi::latent
