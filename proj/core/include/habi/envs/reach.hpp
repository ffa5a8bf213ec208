#pragma once

#include "habi/envs/env.hpp"

namespace habi::envs {

struct ReachOptions {
  double goal = 0.5;
  double goal_radius = 0.05;
  double step_size = 0.1;
  int max_steps = 50;
  double gamma = 0.99;
  /// Reward -|x - goal| each step instead of the sparse 0/1 goal reward.
  bool dense_reward = false;
};

/// 1-D reach: state (x) in [-1, 1], action in [-1, 1], x <- clamp(x + step_size * a).
/// Episodes end inside the goal interval or after max_steps.
class ReachEnv final : public Env {
 public:
  explicit ReachEnv(ReachOptions options = {});

  std::string name() const override { return "reach1d"; }
  int state_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  int max_steps() const override { return options_.max_steps; }
  double gamma() const override { return options_.gamma; }

  /// kPreset starts at -0.5; kAnywhere starts uniformly in [-1, 1].
  Vector<double> reset(std::uint64_t seed, StartMode mode = StartMode::kPreset) override;
  StepResult step(const Vector<double>& action) override;
  const Vector<double>& state() const override { return state_; }
  int elapsed_steps() const override { return steps_; }

  std::unique_ptr<Env> clone() const override;
  std::unique_ptr<Controller> make_expert() const override;

  const ReachOptions& options() const { return options_; }

 private:
  ReachOptions options_;
  Vector<double> state_;
  int steps_ = 0;
};

}  // namespace habi::envs
