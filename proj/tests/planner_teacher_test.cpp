#include "habi/planner/teacher.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "habi/errors.hpp"
#include "habi/nn/finite_diff.hpp"
#include "habi/rng.hpp"
#include "habi/select.hpp"

namespace habi::planner {
namespace {

using nn::MlpParams;

// Transitions with the given 1-D states, 1-D actions and one-step episodes.
envs::OfflineDataset toy_dataset(const std::vector<double>& states, const std::vector<double>& actions,
                                 const std::vector<double>& returns) {
  envs::OfflineDataset d;
  d.env_name = "toy";
  const auto n = static_cast<Index>(states.size());
  d.states = Eigen::Map<const Matrix<double>>(states.data(), 1, n);
  d.next_states = d.states;
  d.actions = Eigen::Map<const Matrix<double>>(actions.data(), 1, n);
  d.rewards = returns;
  d.returns_to_go = returns;
  d.dones.assign(states.size(), 1);
  for (std::size_t i = 0; i < states.size(); ++i) d.episode_starts.push_back(i);
  d.validate();
  return d;
}

TEST(NoiseScheduleTest, LinearEndpointsAndCumulativeProducts) {
  const auto s = NoiseSchedule::linear(20);
  EXPECT_EQ(s.steps(), 20);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta(20), 0.2);
  double prod = 1.0;
  for (int t = 1; t <= 20; ++t) {
    prod *= 1.0 - s.beta(t);
    EXPECT_NEAR(s.alpha_bar(t), prod, 1e-15);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
  }
  EXPECT_GT(s.alpha_bar(20), 0.0);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
  EXPECT_EQ(s.posterior_variance(1), 0.0);
  const double t5 = s.beta(5) * (1 - s.alpha_bar(4)) / (1 - s.alpha_bar(5));
  EXPECT_DOUBLE_EQ(s.posterior_variance(5), t5);
}

TEST(NoiseScheduleTest, RejectsInvalidBetas) {
  EXPECT_THROW(NoiseSchedule::linear(0), ConfigError);
  EXPECT_THROW(NoiseSchedule::from_betas({}), ConfigError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 1.0}), ConfigError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.0}), ConfigError);
  EXPECT_THROW(NoiseSchedule::from_betas({0.2, 0.1}), ConfigError);
  EXPECT_EQ(NoiseSchedule::linear(1).beta(1), 1e-4);
}

TEST(TimestepEmbeddingTest, SinCosPairs) {
  const auto e0 = timestep_embedding(0);
  ASSERT_EQ(e0.size(), kTimeEmbedDim);
  for (int i = 0; i < kTimeEmbedDim / 2; ++i) {
    EXPECT_EQ(e0(2 * i), 0.0);
    EXPECT_EQ(e0(2 * i + 1), 1.0);
  }
  const auto e3 = timestep_embedding(3);
  EXPECT_DOUBLE_EQ(e3(0), std::sin(3.0));
  EXPECT_DOUBLE_EQ(e3(1), std::cos(3.0));
  EXPECT_NE(timestep_embedding(4), e3);
}

TEST(DdpmLossTest, PerfectDenoiserGivesZero) {
  // With x0 = 0 and one timestep, noise = x_t / sqrt(1 - abar), a linear map.
  const auto sch = NoiseSchedule::linear(5);
  const int t = 3, sd = 1, xd = 2;
  MlpParams<double> net;
  net.output_activation = nn::Activation::kIdentity;
  Matrix<double> w = Matrix<double>::Zero(xd, sd + xd + kTimeEmbedDim);
  w.block(0, sd, xd, xd) = Matrix<double>::Identity(xd, xd) / std::sqrt(1.0 - sch.alpha_bar(t));
  net.layers.push_back({w, Vector<double>::Zero(xd)});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix<double> noise(xd, 16);
  for (Index i = 0; i < noise.size(); ++i) noise(i) = n(rng);
  const Matrix<double> states = Matrix<double>::Random(sd, 16);
  const auto in = ddpm_inputs(sch, states, Matrix<double>::Zero(xd, 16).eval(), noise,
                              std::vector<int>(16, t));
  EXPECT_LT(ddpm_loss(net, in, noise), 1e-28);
}

TEST(DdpmLossTest, ZeroDenoiserGivesUnitLossPerDimension) {
  const auto sch = NoiseSchedule::linear(20);
  const std::array<int, 3> sizes = {1 + 4 + kTimeEmbedDim, 8, 4};
  const auto net = nn::make_zero_mlp<double>(sizes);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const Index b = 50000;
  Matrix<double> noise(4, b);
  for (Index i = 0; i < noise.size(); ++i) noise(i) = n(rng);
  std::vector<int> t(static_cast<std::size_t>(b));
  for (auto& v : t) v = 1 + static_cast<int>(rng() % 20);
  const auto in = ddpm_inputs(sch, Matrix<double>::Zero(1, b).eval(), Matrix<double>::Zero(4, b).eval(),
                              noise, t);
  // E[eps^2] = 1, Var[eps^2] = 2: standard error sqrt(2 / 200000).
  EXPECT_NEAR(ddpm_loss(net, in, noise), 1.0, 3.0 * std::sqrt(2.0 / 200000.0));
}

TEST(DdpmLossTest, DenoiserAndValueGradientsMatchFiniteDifferences) {
  PlannerConfig cfg;
  cfg.horizon = 2;
  cfg.diffusion_steps = 6;
  cfg.denoiser_hidden = {12, 10};
  cfg.value_hidden = {9, 7};
  int probes = 0;
  for (std::uint64_t seed = 0; probes < 10; ++seed) {
    ASSERT_LT(seed, 100u);
    std::mt19937_64 rng(seed);
    auto p = make_planner(3, 2, cfg, rng);
    auto den = p.denoiser.cast<double>();
    auto val = p.value_net.cast<double>();
    for (auto& l : den.layers) l.bias.setRandom();
    for (auto& l : val.layers) l.bias.setRandom();
    const Matrix<double> s = Matrix<double>::Random(3, 5);
    const Matrix<double> x0 = Matrix<double>::Random(4, 5);
    const Matrix<double> eps = Matrix<double>::Random(4, 5);
    const std::vector<int> t = {1, 3, 6, 2, 5};
    const auto in = ddpm_inputs(p.schedule, s, x0, eps, t);
    const Matrix<double> a = Matrix<double>::Random(2, 5);
    const Vector<double> y = Vector<double>::Random(5);
    Matrix<double> vin(5, 5);
    vin << s, a;
    if (nn::min_abs_relu_preactivation(den, in) < 1e-4 ||
        nn::min_abs_relu_preactivation(val, vin) < 1e-4) {
      continue;
    }
    ++probes;
    MlpParams<double> g;
    ddpm_loss(den, in, eps, &g);
    auto fd = nn::finite_diff_grad([&] { return ddpm_loss(den, in, eps); }, den, 1e-5);
    EXPECT_LT(nn::max_relative_error(g, fd), 1e-4) << "denoiser seed " << seed;
    MlpParams<double> gv;
    value_loss(val, s, a, y, &gv);
    auto fdv = nn::finite_diff_grad([&] { return value_loss(val, s, a, y); }, val, 1e-5);
    EXPECT_LT(nn::max_relative_error(gv, fdv), 1e-4) << "value seed " << seed;
  }
}

TeacherPlanner tiny_planner(int T, std::uint64_t seed, int hidden = 16) {
  PlannerConfig cfg;
  cfg.horizon = 1;
  cfg.diffusion_steps = T;
  cfg.denoiser_hidden = {hidden, hidden};
  cfg.value_hidden = {hidden};
  std::mt19937_64 rng(seed);
  return make_planner(1, 1, cfg, rng);
}

TEST(DdpmSampleTest, SingleStepZeroDenoiserRescalesInitialNoise) {
  auto p = tiny_planner(1, 0);
  for (auto& l : p.denoiser.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
  std::mt19937_64 rng(17), replay(17);
  const auto x = ddpm_sample(p, Vector<double>::Zero(1), 64, rng);
  ASSERT_EQ(x.rows(), 1);
  std::vector<float> draws(64);
  fill_standard_normal(draws.data(), draws.size(), replay);
  const double scale = 1.0 / std::sqrt(1.0 - p.schedule.beta(1));
  for (Index j = 0; j < 64; ++j) {
    const double expect = std::clamp(static_cast<double>(draws[j]) * scale, -1.0, 1.0);
    EXPECT_NEAR(x(0, j), expect, 1e-6) << j;
  }
}

TEST(DdpmSampleTest, ShapeBoundsAndDeterminism) {
  PlannerConfig cfg;
  cfg.denoiser_hidden = {16};
  cfg.value_hidden = {8};
  std::mt19937_64 init(1);
  const auto p = make_planner(4, 2, cfg, init);
  Vector<double> s = Vector<double>::Constant(4, 0.3);
  std::mt19937_64 a(5), b(5), c(6);
  const auto xa = ddpm_sample(p, s, 7, a);
  EXPECT_EQ(xa.rows(), 8);
  EXPECT_EQ(xa.cols(), 7);
  EXPECT_LE(xa.maxCoeff(), 1.0f);
  EXPECT_GE(xa.minCoeff(), -1.0f);
  EXPECT_EQ(xa, ddpm_sample(p, s, 7, b));
  EXPECT_NE(xa, ddpm_sample(p, s, 7, c));
  EXPECT_THROW(ddpm_sample(p, s, 0, a), UsageError);
  EXPECT_THROW(ddpm_sample(p, Vector<double>::Zero(3), 1, a), ConfigError);
}

TEST(DdpmTrainTest, LossDecreasesOnOneDimensionalToy) {
  std::vector<double> s(400, 0.0), a(400), r(400, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = i % 2 == 0 ? -0.5 : 0.6;
  const auto data = toy_dataset(s, a, r);
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto p = tiny_planner(10, seed, 32);
    std::vector<double> losses;
    PlannerTrainOptions o;
    o.denoiser_steps = 1000;
    o.batch = 64;
    o.lr = 1e-3;
    o.seed = seed;
    o.log_every = 1;
    train_denoiser(p, data, o, [&](const char*, int, double l) { losses.push_back(l); });
    ASSERT_EQ(losses.size(), 1000u);
    double head = 0, tail = 0;
    for (int k = 0; k < 100; ++k) {
      head += losses[static_cast<std::size_t>(k)];
      tail += losses[static_cast<std::size_t>(900 + k)];
    }
    ratios.push_back(tail / head);
  }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_LT(ratios[1], 0.8);
}

TEST(DdpmTrainTest, LearnsConcentratedActionDistribution) {
  std::vector<double> s(512, 0.0), a(512, 0.7), r(512, 0.0);
  const auto data = toy_dataset(s, a, r);
  auto p = tiny_planner(20, 2, 64);
  PlannerTrainOptions o;
  o.denoiser_steps = 3000;
  o.batch = 128;
  o.lr = 1e-3;
  train_denoiser(p, data, o);
  std::mt19937_64 rng(8);
  const auto x = ddpm_sample(p, Vector<double>::Zero(1), 10000, rng);
  EXPECT_NEAR(x.mean(), 0.7, 0.1);
}

TEST(DdpmTrainTest, RejectsNonFiniteLoss) {
  auto p = tiny_planner(5, 0);
  p.denoiser.layers[0].weight(0, 0) = std::numeric_limits<float>::infinity();
  std::vector<double> s(4, 0.0), a(4, 0.1), r(4, 0.0);
  const auto data = toy_dataset(s, a, r);
  std::mt19937_64 rng(0);
  auto batch = sample_ddpm_batch(data, 1, p.schedule, 4, rng);
  batch.states.setOnes();
  auto adam = nn::AdamState<float>::for_network(p.denoiser);
  try {
    ddpm_train_step(p, adam, batch, 1e-3);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.module(), "denoiser");
  }
}

TEST(ValueTrainTest, ConstantReturnIsLearned) {
  std::vector<double> s(256), a(256), r(256, 0.6);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    a[i] = u(rng);
  }
  const auto data = toy_dataset(s, a, r);
  auto p = tiny_planner(5, 3, 32);
  PlannerTrainOptions o;
  o.value_steps = 2000;
  o.batch = 64;
  o.lr = 1e-3;
  train_value(p, data, o);
  for (int k = 0; k < 20; ++k) {
    Vector<double> st = Vector<double>::Constant(1, u(rng));
    Matrix<double> cand = Matrix<double>::Constant(1, 1, u(rng));
    const auto res = score_candidates(p, st, cand);
    EXPECT_NEAR(res.q(0), 0.6, 0.03);
  }
}

TEST(ValueTrainTest, HigherReturnClusterScoresHigher) {
  std::vector<double> s, a, r;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.05);
  for (int i = 0; i < 200; ++i) {
    const bool good = i % 2 == 0;
    s.push_back((good ? 0.5 : -0.5) + n(rng));
    a.push_back((good ? 0.3 : -0.3) + n(rng));
    r.push_back(good ? 0.9 : 0.2);
  }
  const auto data = toy_dataset(s, a, r);
  auto p = tiny_planner(5, 4, 32);
  PlannerTrainOptions o;
  o.value_steps = 1500;
  o.batch = 64;
  o.lr = 1e-3;
  train_value(p, data, o);
  const auto good = score_candidates(p, Vector<double>::Constant(1, 0.5),
                                     Matrix<double>::Constant(1, 1, 0.3));
  const auto bad = score_candidates(p, Vector<double>::Constant(1, -0.5),
                                    Matrix<double>::Constant(1, 1, -0.3));
  EXPECT_GT(good.q(0), bad.q(0) + 0.4);
}

TEST(ValueTrainTest, EmptyDatasetIsUsageError) {
  auto p = tiny_planner(5, 0);
  envs::OfflineDataset empty;
  empty.states.resize(1, 0);
  empty.actions.resize(1, 0);
  EXPECT_THROW(train_value(p, empty, {}), UsageError);
  EXPECT_THROW(train_denoiser(p, empty, {}), UsageError);
}

// Value net whose Q equals the first action component.
TeacherPlanner planner_scoring_first_action() {
  auto p = tiny_planner(3, 0);
  p.value_net.layers.clear();
  Matrix<float> w(1, 2);
  w << 0.0f, 1.0f;
  p.value_net.layers.push_back({w, Vector<float>::Zero(1)});
  return p;
}

TEST(PlanTest, SelectsArgmaxWithLowestIndexTieBreak) {
  const auto p = planner_scoring_first_action();
  Matrix<double> c(1, 3);
  c << 0.1, 0.9, 0.3;
  EXPECT_EQ(score_candidates(p, Vector<double>::Zero(1), c).best, 1);
  c << 0.5, 0.5, 0.5;
  EXPECT_EQ(score_candidates(p, Vector<double>::Zero(1), c).best, 0);
  Vector<double> q(5);
  q << 0.2, 0.9, 0.1, 0.9, 0.3;
  EXPECT_EQ(argmax_lowest(q), 1);
  EXPECT_THROW(argmax_lowest(Vector<double>(0)), UsageError);
}

TEST(PlanTest, SingleCandidateIsBest) {
  const auto p = tiny_planner(4, 1);
  std::mt19937_64 rng(2);
  const auto r = plan(p, Vector<double>::Zero(1), 1, rng);
  EXPECT_EQ(r.candidates.cols(), 1);
  EXPECT_EQ(r.best, 0);
  EXPECT_EQ(r.best_action(), r.candidates.col(0));
}

TEST(PlanTest, BestAttainsMaximumAndIsDeterministic) {
  PlannerConfig cfg;
  cfg.denoiser_hidden = {16};
  cfg.value_hidden = {16};
  std::mt19937_64 init(3);
  const auto p = make_planner(4, 2, cfg, init);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed), again(seed);
    const Vector<double> s = Vector<double>::Random(4);
    const auto r = plan(p, s, 50, rng);
    ASSERT_EQ(r.candidates.cols(), 50);
    ASSERT_EQ(r.q.size(), 50);
    for (Index i = 0; i < 50; ++i) {
      EXPECT_LE(r.q(i), r.q(r.best));
      if (i < r.best) EXPECT_LT(r.q(i), r.q(r.best));
    }
    const auto r2 = plan(p, s, 50, again);
    EXPECT_EQ(r2.candidates, r.candidates);
    EXPECT_EQ(r2.best, r.best);
  }
}

TEST(PlannerCheckpointTest, RoundTripIsBitExact) {
  PlannerConfig cfg;
  cfg.denoiser_hidden = {16, 8};
  cfg.value_hidden = {8};
  std::mt19937_64 init(9);
  const auto p = make_planner(4, 2, cfg, init);
  const auto path = std::filesystem::temp_directory_path() / "habi_planner_test.bin";
  p.save(path);
  const auto q = TeacherPlanner::load(path);
  EXPECT_EQ(q.state_dim, 4);
  EXPECT_EQ(q.action_dim, 2);
  EXPECT_EQ(q.horizon, 4);
  EXPECT_EQ(q.n_candidates_train, 50);
  EXPECT_EQ(q.schedule.betas, p.schedule.betas);
  EXPECT_EQ(q.schedule.alpha_bars, p.schedule.alpha_bars);
  EXPECT_EQ(q.denoiser, p.denoiser);
  EXPECT_EQ(q.value_net, p.value_net);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "HABI";
  }
  EXPECT_THROW(TeacherPlanner::load(path), FormatError);
  std::filesystem::remove(path);
}

TEST(PlannerCheckpointTest, ShapeMismatchIsConfigError) {
  auto p = tiny_planner(3, 0);
  p.horizon = 2;
  EXPECT_THROW(p.validate(), ConfigError);
}

}  // namespace
}  // namespace habi::planner
