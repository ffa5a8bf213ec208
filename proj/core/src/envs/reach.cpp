#include "habi/envs/reach.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "habi/errors.hpp"

namespace habi::envs {

namespace {

class ReachExpert final : public Controller {
 public:
  explicit ReachExpert(ReachOptions options) : options_(options) {}
  void begin_episode(std::uint64_t) override {}
  Vector<double> act(const Vector<double>& state) override {
    Vector<double> a(1);
    a(0) = std::clamp((options_.goal - state(0)) / options_.step_size, -1.0, 1.0);
    return a;
  }

 private:
  ReachOptions options_;
};

}  // namespace

ReachEnv::ReachEnv(ReachOptions options) : options_(options), state_(Vector<double>::Zero(1)) {
  if (options_.step_size <= 0.0 || options_.goal_radius <= 0.0 || options_.max_steps < 1 ||
      std::abs(options_.goal) > 1.0 || options_.gamma <= 0.0 || options_.gamma > 1.0) {
    throw ConfigError("reach: invalid options");
  }
}

Vector<double> ReachEnv::reset(std::uint64_t seed, StartMode mode) {
  state_ = Vector<double>::Zero(1);
  if (mode == StartMode::kPreset) {
    state_(0) = -0.5;
  } else {
    std::mt19937_64 rng(seed);
    state_(0) = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  }
  steps_ = 0;
  return state_;
}

StepResult ReachEnv::step(const Vector<double>& action) {
  if (action.size() != 1) throw ConfigError("reach: action must have 1 entry");
  const double a = std::clamp(action(0), -1.0, 1.0);
  state_(0) = std::clamp(state_(0) + options_.step_size * a, -1.0, 1.0);
  ++steps_;
  const double gap = std::abs(state_(0) - options_.goal);
  const bool goal = gap <= options_.goal_radius;
  StepResult out;
  out.next_state = state_;
  out.reward = options_.dense_reward ? -gap : (goal ? 1.0 : 0.0);
  out.done = goal || steps_ >= options_.max_steps;
  return out;
}

std::unique_ptr<Env> ReachEnv::clone() const { return std::make_unique<ReachEnv>(*this); }

std::unique_ptr<Controller> ReachEnv::make_expert() const {
  return std::make_unique<ReachExpert>(options_);
}

}  // namespace habi::envs
