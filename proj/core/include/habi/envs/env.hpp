#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "habi/nn/types.hpp"

namespace habi::envs {

struct StepResult {
  Vector<double> next_state;
  double reward = 0.0;
  bool done = false;
};

/// A closed-loop controller (scripted expert, random policy). Stateful per episode.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void begin_episode(std::uint64_t seed) = 0;
  virtual Vector<double> act(const Vector<double>& state) = 0;
};

enum class StartMode {
  kPreset,    // the layout's start region
  kAnywhere,  // uniformly over free space (dataset coverage)
};

/// Continuous-control episode interface. Actions live in [-1, 1]^action_dim.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int max_steps() const = 0;
  virtual double gamma() const { return 0.99; }

  virtual Vector<double> reset(std::uint64_t seed, StartMode mode = StartMode::kPreset) = 0;
  /// Out-of-range actions are clamped to [-1, 1].
  virtual StepResult step(const Vector<double>& action) = 0;
  virtual const Vector<double>& state() const = 0;
  virtual int elapsed_steps() const = 0;

  virtual std::unique_ptr<Env> clone() const = 0;
  /// Noise-free scripted expert for this environment.
  virtual std::unique_ptr<Controller> make_expert() const = 0;
};

/// Clamp every component to [-1, 1].
Vector<double> clamp_action(const Vector<double>& a);

}  // namespace habi::envs
