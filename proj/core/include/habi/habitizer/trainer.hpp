#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>

#include "habi/habitizer/losses.hpp"
#include "habi/habitizer/model.hpp"
#include "habi/habitizer/teacher_data.hpp"

namespace habi::habitizer {

struct TrainConfig {
  int steps = 100000;
  int batch = 64;
  /// Leading samples of each batch whose full candidate sets train the critic.
  int critic_batch = 64;
  double lr = 3e-4;
  ErrorNorm norm = ErrorNorm::kEuclidean;
  std::uint64_t seed = 0;
  int log_every = 100;
  int checkpoint_every = 1000;
};

struct LossReport {
  double recon = 0.0;
  double kl = 0.0;
  double kl_smoothed = 0.0;
  double critic = 0.0;
  /// Weight used in this step's policy loss (before the controller update).
  double beta = 0.0;
  double total = 0.0;
};

struct StepBatch {
  Matrix<float> states;        // state_dim x B
  Matrix<float> best_actions;  // action_dim x B
  Matrix<float> noise;         // latent_dim x B
  Matrix<float> candidates;    // action_dim x (critic_batch * n)
  Matrix<float> q;             // n x critic_batch
};

/// Uniform draws (with replacement) from the teacher dataset plus latent noise.
StepBatch sample_step_batch(const TeacherDataset& data, int batch, int critic_batch,
                            int latent_dim, std::mt19937_64& rng);

/// One habitization step: Adam on prior, posterior and decoder with
/// recon + beta * KL; Adam on the critic alone with the critic loss on the
/// detached posterior latent; then the KL moving average and beta update.
/// Throws TrainingError naming the term ("recon", "kl", "critic") or the
/// network whose gradient is non-finite; the model is not modified then.
LossReport habitize_step(HabiModel<float>& model, TrainingState& state, const StepBatch& batch,
                         double lr, ErrorNorm norm = ErrorNorm::kEuclidean);

using StepLogFn = std::function<void(std::uint64_t step, const LossReport&)>;

/// Full loop. Writes <run_dir>/metrics.csv (one row per log interval),
/// <run_dir>/checkpoints/step_<n>.bin every checkpoint_every steps and
/// <run_dir>/model.bin at the end. Step k draws from a stream seeded by
/// (seed, k), so with `resume` the run continues from the newest checkpoint
/// and produces the same files as an uninterrupted run.
HabiModel<float> run_habitization(const TeacherDataset& data, const ModelConfig& model_config,
                                  const TrainConfig& config, const std::filesystem::path& run_dir,
                                  bool resume = false, const StepLogFn& log = {});

// Direct-distillation baseline: state -> action regression on the teacher's best actions.

nn::MlpParams<float> make_distill_net(int state_dim, int action_dim, const std::vector<int>& hidden,
                                      std::mt19937_64& rng);

/// Batch mean of ||net(s) - target||.
template <class Real>
double distill_loss(const nn::MlpParams<Real>& net, const Matrix<Real>& states,
                    const Matrix<Real>& targets, ErrorNorm norm,
                    nn::MlpParams<Real>* grads = nullptr);

struct DistillConfig {
  std::vector<int> hidden = {128, 128};
  int steps = 10000;
  int batch = 64;
  double lr = 3e-4;
  ErrorNorm norm = ErrorNorm::kEuclidean;
  std::uint64_t seed = 0;
  int log_every = 100;
};

/// Adam on distill_loss; batches drawn from (states, targets) columns.
/// UsageError on an empty dataset.
void train_direct_distill(nn::MlpParams<float>& net, const Matrix<float>& states,
                          const Matrix<float>& targets, const DistillConfig& config,
                          const std::function<void(int step, double loss)>& log = {});

void save_distill_net(const std::filesystem::path& path, const nn::MlpParams<float>& net);
/// FormatError unless the file holds a distillation network.
nn::MlpParams<float> load_distill_net(const std::filesystem::path& path);

}  // namespace habi::habitizer
