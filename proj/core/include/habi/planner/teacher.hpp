#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <vector>

#include "habi/envs/dataset.hpp"
#include "habi/nn/adam.hpp"
#include "habi/nn/mlp.hpp"

namespace habi::planner {

/// DDPM variance schedule. Timesteps run 1..T; index 0 of the vectors is t = 1.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
  /// Cumulative product of (1 - beta) up to t; alpha_bar(0) = 1.
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(t - 1)]; }
  /// Variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const;

  /// Betas evenly spaced from beta_start to beta_end (T = 1 uses beta_start).
  static NoiseSchedule linear(int T, double beta_start = 1e-4, double beta_end = 0.2);
  /// Throws ConfigError unless every beta is in (0, 1) and betas are non-decreasing.
  static NoiseSchedule from_betas(std::vector<double> betas);
};

inline constexpr int kTimeEmbedDim = 16;

/// Sinusoidal features of the timestep: sin/cos pairs at geometric frequencies.
Vector<double> timestep_embedding(int t);

struct PlannerConfig {
  int horizon = 4;
  int diffusion_steps = 20;
  double beta_start = 1e-4;
  double beta_end = 0.2;
  std::vector<int> denoiser_hidden = {256, 256};
  std::vector<int> value_hidden = {128, 128};
  int n_candidates_train = 50;
};

/// Conditional action-sequence diffuser plus a Q-value regressor.
/// Denoiser input: [state; noisy action sequence (horizon x action_dim, time-major); t-embedding],
/// output: predicted noise. Value input: [state; first action], output: Q.
struct TeacherPlanner {
  int state_dim = 0;
  int action_dim = 0;
  int horizon = 1;
  int n_candidates_train = 50;
  NoiseSchedule schedule;
  nn::MlpParams<float> denoiser;
  nn::MlpParams<float> value_net;

  int sequence_dim() const { return horizon * action_dim; }
  /// Throws ConfigError when network shapes disagree with the dimensions.
  void validate() const;

  void save(const std::filesystem::path& path) const;
  /// FormatError on malformed files, ConfigError on inconsistent shapes.
  static TeacherPlanner load(const std::filesystem::path& path);
};

TeacherPlanner make_planner(int state_dim, int action_dim, const PlannerConfig& config,
                            std::mt19937_64& rng);

/// Denoiser inputs for a batch: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
/// Columns are samples; `t` holds one timestep in 1..T per column.
template <class Real>
Matrix<Real> ddpm_inputs(const NoiseSchedule& schedule, const Matrix<Real>& states,
                         const Matrix<Real>& x0, const Matrix<Real>& noise,
                         const std::vector<int>& t);

/// Mean over all entries of (denoiser(inputs) - noise)^2. Accumulates into
/// `grads` when non-null.
template <class Real>
double ddpm_loss(const nn::MlpParams<Real>& denoiser, const Matrix<Real>& inputs,
                 const Matrix<Real>& noise, nn::MlpParams<Real>* grads = nullptr);

/// Mean over the batch of (Q(s, a) - target)^2.
template <class Real>
double value_loss(const nn::MlpParams<Real>& value_net, const Matrix<Real>& states,
                  const Matrix<Real>& actions, const Vector<Real>& targets,
                  nn::MlpParams<Real>* grads = nullptr);

struct DdpmBatch {
  Matrix<float> states;
  Matrix<float> x0;
  Matrix<float> noise;
  std::vector<int> t;
};

/// Uniform transitions from the dataset with horizon-length action windows,
/// uniform timesteps and standard-normal noise.
DdpmBatch sample_ddpm_batch(const envs::OfflineDataset& data, int horizon,
                            const NoiseSchedule& schedule, int batch, std::mt19937_64& rng);

/// One Adam step on the noise-prediction loss; returns the pre-step loss.
/// Throws TrainingError("denoiser", ...) on a non-finite loss.
double ddpm_train_step(TeacherPlanner& planner, nn::AdamState<float>& adam, const DdpmBatch& batch,
                       double lr);

struct PlannerTrainOptions {
  int denoiser_steps = 20000;
  int value_steps = 10000;
  int batch = 256;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  int log_every = 100;
};

/// (phase, step, loss) for every logged step; phase is "denoiser" or "value".
using PlannerLogFn = std::function<void(const char* phase, int step, double loss)>;

/// Trains the denoiser. Step k draws its batch from a stream seeded by (seed, k).
void train_denoiser(TeacherPlanner& planner, const envs::OfflineDataset& data,
                    const PlannerTrainOptions& options, const PlannerLogFn& log = {});

/// Regresses Q(s, a) onto discounted return-to-go. UsageError on an empty dataset.
void train_value(TeacherPlanner& planner, const envs::OfflineDataset& data,
                 const PlannerTrainOptions& options, const PlannerLogFn& log = {});

/// `n` reverse-diffusion rollouts conditioned on `state`; returns a
/// sequence_dim x n matrix clamped to [-1, 1]. Each reverse step predicts
/// x0 from the noise estimate, clips it to the action box and takes the
/// posterior mean plus posterior-variance noise (none at t = 1).
Matrix<float> ddpm_sample(const TeacherPlanner& planner, const Vector<double>& state, int n,
                          std::mt19937_64& rng);

struct PlanResult {
  Matrix<double> candidates;  // action_dim x n (first action of each sampled sequence)
  Vector<double> q;           // n
  Index best = 0;

  Vector<double> best_action() const { return candidates.col(best); }
};

/// Score `candidates` (action_dim x n) with the value net and select the argmax.
PlanResult score_candidates(const TeacherPlanner& planner, const Vector<double>& state,
                            Matrix<double> candidates);

/// Sample n plans, score their first actions, best = argmax Q (lowest index on ties).
PlanResult plan(const TeacherPlanner& planner, const Vector<double>& state, int n,
                std::mt19937_64& rng);

}  // namespace habi::planner
