#include "habi/latent/kl_controller.hpp"

#include <algorithm>

#include "habi/errors.hpp"

namespace habi::latent {

void KlWeightController::update(double observed_kl) {
  const double kl = std::max(observed_kl, 1e-8);
  const double gap = std::log10(kl) - std::log10(target_kl);
  log_beta = std::clamp(log_beta + lr_beta * gap, log_beta_min, log_beta_max);
}

void KlWeightController::validate() const {
  if (!(target_kl > 0.0)) throw ConfigError("kl controller: target_kl must be positive");
  if (!(lr_beta > 0.0)) throw ConfigError("kl controller: lr_beta must be positive");
  if (!(log_beta_min < log_beta_max)) throw ConfigError("kl controller: empty clamp range");
  if (log_beta < log_beta_min || log_beta > log_beta_max) {
    throw ConfigError("kl controller: initial log_beta outside clamp range");
  }
}

}  // namespace habi::latent
