#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <random>

#include "habi/habitizer/model.hpp"

namespace habi::inference {

/// Evaluation counts per network, for instrumentation in tests.
struct CallCounters {
  std::atomic<std::uint64_t> prior{0};
  std::atomic<std::uint64_t> decoder{0};
  std::atomic<std::uint64_t> critic{0};
};

/// Fast habitual policy: prior encoder, decoder and critic copied out of a
/// trained model. The posterior encoder is not part of this type.
struct HiPolicy {
  int state_dim = 0;
  int action_dim = 0;
  latent::GaussianHead<float> prior;
  nn::MlpParams<float> decoder;
  nn::MlpParams<float> critic;
  int n_candidates = 5;
  double action_low = -1.0;
  double action_high = 1.0;
  /// Optional; incremented on every network evaluation when set.
  CallCounters* counters = nullptr;

  static HiPolicy from_model(const habitizer::HabiModel<float>& model, int n_candidates = 5);
  int latent_dim() const { return static_cast<int>(decoder.input_dim()); }
  /// ConfigError on inconsistent shapes or n_candidates < 1.
  void validate() const;
};

struct HiDecision {
  Vector<double> action;  // clamped to [action_low, action_high]
  Index chosen = 0;
  Vector<double> scores;  // critic score of every candidate
};

/// Replacement critic: (latents dz x N, actions ad x N) -> N scores.
using Scorer = std::function<Vector<float>(const Matrix<float>& latents, const Matrix<float>& actions)>;

/// N prior samples, decoded, scored by the critic; the highest score wins
/// (lowest index on ties) and is clamped after selection.
HiDecision hi_act(const HiPolicy& policy, const Vector<double>& state, std::mt19937_64& rng,
                  const Scorer* scorer = nullptr);

/// One prior sample decoded, no critic. Same draws as hi_act with N = 1.
Vector<double> hi_act_no_critic(const HiPolicy& policy, const Vector<double>& state,
                                std::mt19937_64& rng);

/// hi_act for every column of `states`, evaluated as one batch. Returns ad x B.
Matrix<double> hi_act_batch(const HiPolicy& policy, const Matrix<double>& states,
                            std::mt19937_64& rng);

}  // namespace habi::inference
