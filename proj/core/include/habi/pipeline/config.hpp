#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "habi/envs/env.hpp"
#include "habi/habitizer/losses.hpp"

namespace habi::pipeline {

struct RunSection {
  std::string env = "medium";
  std::uint64_t seed = 0;
  int threads = 1;

  friend bool operator==(const RunSection&, const RunSection&) = default;
};

struct DataSection {
  int episodes = 400;
  std::string behavior = "mixed";
  double noise_sigma = 0.3;
  double random_fraction = 0.5;

  friend bool operator==(const DataSection&, const DataSection&) = default;
};

struct PlannerSection {
  int diffusion_steps = 20;  // T
  int horizon = 4;           // H
  double beta_start = 1e-4;
  double beta_end = 0.2;
  std::vector<int> denoiser_hidden = {256, 256};
  std::vector<int> value_hidden = {128, 128};
  int n_candidates_train = 50;
  int denoiser_steps = 10000;
  int value_steps = 5000;
  int batch = 256;
  double lr = 1e-3;

  friend bool operator==(const PlannerSection&, const PlannerSection&) = default;
};

struct HabiSection {
  int latent_dim = 64;
  std::vector<int> hidden = {128, 128};
  std::vector<int> critic_hidden = {128, 128};
  double lr = 1e-3;
  int steps = 10000;
  int batch = 64;
  int critic_batch = 32;
  double target_kl = 1.0;
  double lr_beta = 0.01;
  habitizer::ErrorNorm norm = habitizer::ErrorNorm::kEuclidean;
  int teacher_states = 10000;
  int seeds = 3;  // independent training runs
  int log_every = 100;
  int checkpoint_every = 1000;

  friend bool operator==(const HabiSection&, const HabiSection&) = default;
};

struct InferenceSection {
  std::vector<int> candidates = {1, 5};

  friend bool operator==(const InferenceSection&, const InferenceSection&) = default;
};

struct EvalSection {
  int episodes = 100;
  envs::StartMode start = envs::StartMode::kAnywhere;
  int anchor_episodes = 200;

  friend bool operator==(const EvalSection&, const EvalSection&) = default;
};

struct BenchSection {
  int reps = 2000;
  int warmup = 200;
  int teacher_reps = 200;
  int teacher_warmup = 10;
  int threads = 1;
  int probe_states = 64;
  bool pin = true;
  int batch_size = 0;

  friend bool operator==(const BenchSection&, const BenchSection&) = default;
};

/// Every knob of a pipeline run. Text form is `key = value` lines grouped
/// under `[section]` headers; see docs/FORMATS.md.
struct RunConfig {
  RunSection run;
  DataSection data;
  PlannerSection planner;
  HabiSection habi;
  InferenceSection inference;
  EvalSection eval;
  BenchSection bench;

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Sizes small enough for the whole pipeline to finish in a few minutes.
RunConfig mini_config();

/// Parse config text on top of `base`. Unknown sections or keys, duplicate
/// keys and malformed values throw ConfigError with the line number.
RunConfig parse_config(std::string_view text, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

/// Every key, in a fixed order. parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& config);

/// Apply one `section.key=value` override.
void apply_override(RunConfig& config, std::string_view assignment);

}  // namespace habi::pipeline
