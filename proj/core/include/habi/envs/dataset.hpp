#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "habi/envs/env.hpp"

namespace habi::envs {

enum class Behavior {
  kExpert,       // scripted controller, no noise
  kNoisyExpert,  // scripted controller + Gaussian action noise
  kRandom,       // uniform actions
  kMixed,        // noisy-expert and random episodes interleaved (see random_fraction)
};

std::string to_string(Behavior b);
/// "expert", "noisy-expert", "random", "mixed". Throws ConfigError otherwise.
Behavior parse_behavior(std::string_view name);

/// Transitions stored column-wise, one column per step, episodes contiguous.
struct OfflineDataset {
  std::string env_name;
  std::string behavior;
  std::uint64_t seed = 0;
  double gamma = 0.99;

  Matrix<double> states;       // state_dim x n
  Matrix<double> actions;      // action_dim x n
  Matrix<double> next_states;  // state_dim x n
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> returns_to_go;
  /// Index of each episode's first transition; episode k spans
  /// [episode_starts[k], episode_starts[k+1]) (or to size() for the last one).
  std::vector<std::size_t> episode_starts;

  std::size_t size() const { return rewards.size(); }
  std::size_t episode_count() const { return episode_starts.size(); }
  std::size_t episode_end(std::size_t k) const;
  /// Episode containing transition i.
  std::size_t episode_of(std::size_t i) const;
  /// Fraction of episodes whose final transition earned positive reward.
  double success_rate() const;

  /// Actions i .. i+horizon-1 stacked into one vector; steps past the end
  /// of the episode repeat its last action.
  Vector<double> action_window(std::size_t i, int horizon) const;

  /// Throws FormatError unless shapes agree, episodes are well-formed, every
  /// non-terminal next_state equals its successor's state and returns-to-go
  /// satisfy the discounted backup.
  void validate() const;

  void save(const std::filesystem::path& path) const;
  static OfflineDataset load(const std::filesystem::path& path);
};

/// Discounted reward-to-go per step of one episode; last entry equals its reward.
std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma);

struct DatasetOptions {
  double noise_sigma = 0.3;
  /// Share of random episodes under kMixed, spread evenly: episode k is random
  /// when floor((k + 1) f) > floor(k f). At 0.5 the odd episodes are random.
  double random_fraction = 0.5;
  StartMode start = StartMode::kAnywhere;
};

/// Roll out `n_episodes` with the given behavior. Every episode draws its own
/// seed from `seed`, so the result is independent of any other global state.
OfflineDataset generate_offline_dataset(const Env& env, Behavior behavior, int n_episodes,
                                        std::uint64_t seed, const DatasetOptions& options = {});

/// "reach1d", "reach1d-dense", or a maze preset name.
std::unique_ptr<Env> make_env(std::string_view name);

}  // namespace habi::envs
