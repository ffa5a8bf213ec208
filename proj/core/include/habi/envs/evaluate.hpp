#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "habi/envs/env.hpp"

namespace habi::envs {

/// Stochastic single-action policy. Must be safe to call concurrently with
/// distinct rng objects.
using ActFn = std::function<Vector<double>(const Vector<double>& state, std::mt19937_64& rng)>;

/// Creates one fresh controller per evaluation worker.
using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

struct ScoreAnchors {
  double random_return = 0.0;
  double expert_return = 1.0;

  double normalize(double ret) const {
    return 100.0 * (ret - random_return) / (expert_return - random_return);
  }
};

struct EvalReport {
  int episodes = 0;
  double mean_return = 0.0;
  double stderr_return = 0.0;
  double success_rate = 0.0;
  double mean_length = 0.0;
  /// Present when anchors were supplied.
  std::optional<double> normalized_score;
  std::optional<double> normalized_stderr;
  std::vector<std::uint64_t> seeds;
  std::vector<double> returns;
};

/// `n` distinct episode seeds derived from `base`.
std::vector<std::uint64_t> episode_seeds(std::uint64_t base, int n);

/// One episode per seed; the policy rng and the env reset are both seeded
/// from the episode seed. Episodes are split over `threads` workers, each with
/// its own env clone; the report does not depend on the thread count.
/// Throws UsageError on empty or duplicate seeds, EvaluationError when the
/// policy throws.
EvalReport evaluate_policy(const Env& env, const ActFn& act, const std::vector<std::uint64_t>& seeds,
                           const std::optional<ScoreAnchors>& anchors = std::nullopt,
                           int threads = 1, StartMode start = StartMode::kPreset);

EvalReport evaluate_controller(const Env& env, const ControllerFactory& make,
                               const std::vector<std::uint64_t>& seeds,
                               const std::optional<ScoreAnchors>& anchors = std::nullopt,
                               int threads = 1, StartMode start = StartMode::kPreset);

/// Uniform actions in [-1, 1]^action_dim.
ActFn random_policy(int action_dim);

/// Anchors from the noise-free scripted expert and the uniform random policy.
ScoreAnchors measure_anchors(const Env& env, int n_episodes, std::uint64_t seed, int threads = 1,
                             StartMode start = StartMode::kPreset);

struct NamedPolicy {
  std::string name;
  ActFn act;
};

struct ActionSample {
  std::string policy;
  int state_id = 0;
  int sample_id = 0;
  Vector<double> action;
};

/// `n_samples` draws of every policy at every state; the draw for
/// (policy p, state s, sample k) uses its own seed derived from `seed`.
std::vector<ActionSample> dump_action_distribution(const std::vector<NamedPolicy>& policies,
                                                   const std::vector<Vector<double>>& states,
                                                   int n_samples, std::uint64_t seed);

/// CSV with header "policy,state_id,sample_id,a0,a1,...".
std::string action_samples_csv(const std::vector<ActionSample>& rows, int action_dim);

}  // namespace habi::envs
