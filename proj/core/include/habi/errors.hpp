#pragma once

#include <stdexcept>
#include <string>

namespace habi {

/// Bad shapes, unknown keys, out-of-range configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition (empty input, non-scalar loss, ...).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A training step produced a non-finite value. `module()` names the culprit.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(std::string module, const std::string& what)
      : std::runtime_error(module + ": " + what), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Malformed or truncated file on disk.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A policy failed during an evaluation rollout.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(int episode, const std::string& what)
      : std::runtime_error("episode " + std::to_string(episode) + ": " + what), episode_(episode) {}

  int episode() const noexcept { return episode_; }

 private:
  int episode_;
};

}  // namespace habi
