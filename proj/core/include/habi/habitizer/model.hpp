#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "habi/latent/gaussian.hpp"
#include "habi/latent/kl_controller.hpp"
#include "habi/nn/adam.hpp"
#include "habi/nn/mlp.hpp"

namespace habi::habitizer {

struct ModelConfig {
  int latent_dim = 64;
  std::vector<int> hidden = {128, 128};         // encoders and decoder
  std::vector<int> critic_hidden = {128, 128};
  double target_kl = 1.0;
  double lr_beta = 0.01;
  double log_beta_init = 0.0;
};

/// Prior encoder p(z|s), posterior encoder q(z|s,a*), decoder z -> a, critic (z, a) -> Q.
template <class Real>
struct HabiModel {
  int state_dim = 0;
  int action_dim = 0;
  latent::GaussianHead<Real> prior;
  latent::GaussianHead<Real> posterior;
  nn::MlpParams<Real> decoder;
  nn::MlpParams<Real> critic;
  latent::KlWeightController kl_ctrl;
  latent::MovingAverage kl_avg;

  int latent_dim() const { return static_cast<int>(decoder.input_dim()); }
  /// Throws ConfigError when the four networks do not fit together.
  void validate() const;

  template <class To>
  HabiModel<To> cast() const {
    HabiModel<To> out;
    out.state_dim = state_dim;
    out.action_dim = action_dim;
    out.prior = {prior.mu.template cast<To>(), prior.xi.template cast<To>()};
    out.posterior = {posterior.mu.template cast<To>(), posterior.xi.template cast<To>()};
    out.decoder = decoder.template cast<To>();
    out.critic = critic.template cast<To>();
    out.kl_ctrl = kl_ctrl;
    out.kl_avg = kl_avg;
    return out;
  }
};

template <class Real>
HabiModel<Real> make_habi_model(int state_dim, int action_dim, const ModelConfig& config,
                                std::mt19937_64& rng);

/// Adam moments for every network, plus the global step.
struct TrainingState {
  nn::AdamState<float> prior_mu, prior_xi, post_mu, post_xi, decoder, critic;
  std::uint64_t step = 0;

  static TrainingState for_model(const HabiModel<float>& model);
};

/// Model (and optionally training state) in one container file.
void save_model(const std::filesystem::path& path, const HabiModel<float>& model,
                const TrainingState* state = nullptr);
/// FormatError on malformed files; `state` must be non-null to read training state,
/// which must then be present.
HabiModel<float> load_model(const std::filesystem::path& path, TrainingState* state = nullptr);

}  // namespace habi::habitizer
