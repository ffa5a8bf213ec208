#include "habi/habitizer/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "habi/errors.hpp"
#include "habi/select.hpp"

namespace habi::habitizer {
namespace {

namespace fs = std::filesystem;

// 1-D states in [-1, 1]; candidates uniform in [-1, 1]; Q = -|a - 0.5 s|, so
// the best action tracks 0.5 s.
TeacherDataset toy_teacher_data(int m, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  TeacherDataset d;
  d.state_dim = 1;
  d.action_dim = 1;
  d.n_candidates = n;
  d.seed = seed;
  d.states.resize(1, m);
  d.best_actions.resize(1, m);
  d.candidates.resize(1, static_cast<Index>(m) * n);
  d.q.resize(n, m);
  for (Index i = 0; i < m; ++i) {
    d.states(0, i) = u(rng);
    for (Index j = 0; j < n; ++j) {
      const float a = u(rng);
      d.candidates(0, i * n + j) = a;
      d.q(j, i) = -std::abs(a - 0.5f * d.states(0, i));
    }
    const Index b = argmax_lowest(d.q.col(i));
    d.best_index.push_back(static_cast<std::uint32_t>(b));
    d.best_actions(0, i) = d.candidates(0, i * n + b);
  }
  d.validate();
  return d;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.latent_dim = 2;
  c.hidden = {16, 16};
  c.critic_hidden = {16};
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TEST(StepBatchTest, ShapesAndCandidateOwnership) {
  const auto d = toy_teacher_data(50, 4, 1);
  std::mt19937_64 rng(2);
  const auto b = sample_step_batch(d, 8, 3, 2, rng);
  EXPECT_EQ(b.states.cols(), 8);
  EXPECT_EQ(b.best_actions.cols(), 8);
  EXPECT_EQ(b.noise.rows(), 2);
  EXPECT_EQ(b.candidates.cols(), 12);
  EXPECT_EQ(b.q.cols(), 3);
  for (Index j = 0; j < 3; ++j) {
    Index owner = -1;
    for (Index i = 0; i < 50; ++i) {
      if (d.states(0, i) == b.states(0, j)) owner = i;
    }
    ASSERT_GE(owner, 0);
    EXPECT_EQ(b.candidates.middleCols(j * 4, 4), d.candidates.middleCols(owner * 4, 4));
    EXPECT_EQ(b.q.col(j), d.q.col(owner));
    EXPECT_EQ(b.best_actions(0, j), d.best_actions(0, owner));
  }
  EXPECT_THROW(sample_step_batch(d, 4, 5, 2, rng), ConfigError);
  EXPECT_THROW(sample_step_batch(TeacherDataset{}, 4, 2, 2, rng), UsageError);
}

TEST(HabitizeStepTest, BetaFollowsSmoothedKlAgainstTarget) {
  const auto d = toy_teacher_data(64, 4, 3);
  for (double target : {1e-6, 1e3}) {
    auto cfg = tiny_config();
    cfg.target_kl = target;
    std::mt19937_64 init(4);
    auto m = make_habi_model<float>(1, 1, cfg, init);
    auto st = TrainingState::for_model(m);
    double prev = m.kl_ctrl.beta();
    for (int k = 0; k < 20; ++k) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(k));
      const auto r = habitize_step(m, st, sample_step_batch(d, 16, 4, 2, rng), 1e-3);
      EXPECT_EQ(r.beta, prev);
      if (target < 1.0) {
        EXPECT_GT(m.kl_ctrl.beta(), prev);
      } else {
        EXPECT_LT(m.kl_ctrl.beta(), prev);
      }
      prev = m.kl_ctrl.beta();
    }
    EXPECT_EQ(st.step, 20u);
  }
}

TEST(HabitizeStepTest, NonFiniteBatchLeavesModelUntouched) {
  const auto d = toy_teacher_data(16, 3, 5);
  std::mt19937_64 init(6);
  auto m = make_habi_model<float>(1, 1, tiny_config(), init);
  auto st = TrainingState::for_model(m);
  std::mt19937_64 rng(7);
  auto batch = sample_step_batch(d, 8, 2, 2, rng);
  batch.best_actions(0, 1) = std::numeric_limits<float>::quiet_NaN();
  const auto before = m.decoder;
  try {
    habitize_step(m, st, batch, 1e-3);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.module(), "recon");
  }
  EXPECT_EQ(m.decoder, before);
  EXPECT_EQ(st.step, 0u);
  batch = sample_step_batch(d, 8, 2, 2, rng);
  batch.q(0, 0) = std::numeric_limits<float>::infinity();
  try {
    habitize_step(m, st, batch, 1e-3);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.module(), "critic");
  }
  EXPECT_EQ(m.decoder, before);
}

TEST(HabitizationTest, ReconstructionImprovesOnToyTeacher) {
  const auto d = toy_teacher_data(256, 8, 8);
  auto cfg = tiny_config();
  cfg.target_kl = 2.0;
  TrainConfig tc;
  tc.steps = 1500;
  tc.batch = 32;
  tc.critic_batch = 8;
  tc.lr = 3e-3;
  tc.log_every = 50;
  tc.checkpoint_every = 1500;
  std::vector<double> recon;
  run_habitization(d, cfg, tc, fresh_dir("habi_toy_run"), false,
                   [&](std::uint64_t, const LossReport& r) { recon.push_back(r.recon); });
  ASSERT_EQ(recon.size(), 30u);
  const double early = (recon[0] + recon[1]) / 2, late = (recon[28] + recon[29]) / 2;
  EXPECT_LT(late, 0.5 * early);
}

TEST(HabitizationTest, LargeFixedBetaCollapsesKl) {
  const auto d = toy_teacher_data(256, 4, 9);
  auto cfg = tiny_config();
  cfg.log_beta_init = std::log(100.0);
  cfg.lr_beta = 1e-9;
  TrainConfig tc;
  tc.steps = 800;
  tc.batch = 32;
  tc.critic_batch = 4;
  tc.lr = 3e-3;
  tc.log_every = 800;
  tc.checkpoint_every = 800;
  double kl = -1.0;
  run_habitization(d, cfg, tc, fresh_dir("habi_collapse_run"), false,
                   [&](std::uint64_t, const LossReport& r) { kl = r.kl; });
  EXPECT_GE(kl, 0.0);
  EXPECT_LT(kl, 0.1);
}

TEST(HabitizationTest, RunsAreBitIdenticalAndResumeMatches) {
  const auto d = toy_teacher_data(64, 4, 10);
  TrainConfig tc;
  tc.steps = 200;
  tc.batch = 16;
  tc.critic_batch = 4;
  tc.log_every = 10;
  tc.checkpoint_every = 100;
  tc.seed = 3;
  const auto a = fresh_dir("habi_det_a"), b = fresh_dir("habi_det_b");
  run_habitization(d, tiny_config(), tc, a);
  run_habitization(d, tiny_config(), tc, b);
  for (const char* f : {"metrics.csv", "model.bin", "checkpoints/step_100.bin", "checkpoints/step_200.bin"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  // Interrupt b after step 100 by dropping everything written later, then resume.
  fs::remove(b / "checkpoints/step_200.bin");
  fs::remove(b / "model.bin");
  {
    std::ofstream out(b / "metrics.csv", std::ios::app);
    out << "150,9,9,9,9,9\n";
  }
  run_habitization(d, tiny_config(), tc, b, true);
  for (const char* f : {"metrics.csv", "model.bin", "checkpoints/step_200.bin"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto metrics = slurp(a / "metrics.csv");
  EXPECT_EQ(metrics.rfind("step,recon,kl,kl_smooth,beta,critic\n", 0), 0u);
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 21);
}

TEST(HabitizationTest, CorruptCheckpointIsFormatError) {
  const auto d = toy_teacher_data(32, 2, 11);
  TrainConfig tc;
  tc.steps = 20;
  tc.batch = 8;
  tc.critic_batch = 2;
  tc.log_every = 10;
  tc.checkpoint_every = 10;
  const auto dir = fresh_dir("habi_corrupt_run");
  run_habitization(d, tiny_config(), tc, dir);
  {
    std::ofstream out(dir / "checkpoints/step_20.bin", std::ios::binary | std::ios::trunc);
    out << "HABIxxxx";
  }
  EXPECT_THROW(run_habitization(d, tiny_config(), tc, dir, true), FormatError);
}

TEST(HabitizationTest, InvalidConfigIsRejected) {
  const auto d = toy_teacher_data(8, 2, 12);
  TrainConfig tc;
  tc.steps = 0;
  EXPECT_THROW(run_habitization(d, tiny_config(), tc, fresh_dir("habi_bad")), ConfigError);
  tc.steps = 10;
  tc.critic_batch = tc.batch + 1;
  EXPECT_THROW(run_habitization(d, tiny_config(), tc, fresh_dir("habi_bad")), ConfigError);
  tc.critic_batch = 1;
  tc.lr = -1.0;
  EXPECT_THROW(run_habitization(d, tiny_config(), tc, fresh_dir("habi_bad")), ConfigError);
}

TEST(ModelCheckpointTest, RoundTripWithTrainingState) {
  std::mt19937_64 init(13);
  auto m = make_habi_model<float>(3, 2, tiny_config(), init);
  m.kl_ctrl.log_beta = -0.25;
  m.kl_avg.push(0.7);
  auto st = TrainingState::for_model(m);
  st.step = 42;
  st.critic.step_count = 41;
  st.decoder.m.layers[0].bias.setConstant(0.5f);
  const auto path = fs::temp_directory_path() / "habi_model_test.bin";
  save_model(path, m, &st);
  TrainingState back;
  const auto m2 = load_model(path, &back);
  EXPECT_EQ(m2.prior, m.prior);
  EXPECT_EQ(m2.posterior, m.posterior);
  EXPECT_EQ(m2.decoder, m.decoder);
  EXPECT_EQ(m2.critic, m.critic);
  EXPECT_EQ(m2.kl_ctrl.log_beta, -0.25);
  EXPECT_EQ(m2.kl_avg.value, 0.7);
  EXPECT_TRUE(m2.kl_avg.initialized);
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.critic.step_count, 41u);
  EXPECT_EQ(back.decoder.m, st.decoder.m);
  save_model(path, m);
  EXPECT_NO_THROW(load_model(path));
  EXPECT_THROW(load_model(path, &back), FormatError);
  fs::remove(path);
}

TEST(DirectDistillTest, FitsLinearTarget) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Matrix<float> s(1, 512), t(1, 512);
  for (Index i = 0; i < 512; ++i) {
    s(0, i) = u(rng);
    t(0, i) = 0.5f * s(0, i);
  }
  auto net = make_distill_net(1, 1, {32, 32}, rng);
  DistillConfig c;
  c.steps = 3000;
  c.batch = 32;
  c.lr = 1e-3;
  train_direct_distill(net, s, t, c);
  const double mse = (nn::mlp_forward(net, s) - t).squaredNorm() / 512.0;
  EXPECT_LT(mse, 1e-3);
  EXPECT_THROW(train_direct_distill(net, Matrix<float>(1, 0), Matrix<float>(1, 0), c), UsageError);
}

}  // namespace
}  // namespace habi::habitizer
