// Per-decision cost of each policy at default network sizes. Weights are
// random; cost does not depend on their values.

#include <benchmark/benchmark.h>

#include <random>

#include "habi/envs/point_maze.hpp"
#include "habi/habitizer/model.hpp"
#include "habi/habitizer/trainer.hpp"
#include "habi/inference/hi_policy.hpp"
#include "habi/planner/teacher.hpp"

namespace {

using namespace habi;

constexpr int kStateDim = 4;
constexpr int kActionDim = 2;

Vector<double> probe_state() {
  Vector<double> s(kStateDim);
  s << 0.3, -0.2, 0.05, 0.1;
  return s;
}

const habitizer::HabiModel<float>& model() {
  static const auto m = [] {
    std::mt19937_64 rng(1);
    return habitizer::make_habi_model<float>(kStateDim, kActionDim, habitizer::ModelConfig{}, rng);
  }();
  return m;
}

void BM_HiAct(benchmark::State& state) {
  const auto hi = inference::HiPolicy::from_model(model(), static_cast<int>(state.range(0)));
  const auto s = probe_state();
  std::mt19937_64 rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(inference::hi_act(hi, s, rng).action.data());
}
BENCHMARK(BM_HiAct)->Arg(1)->Arg(5)->Arg(20);

void BM_HiActNoCritic(benchmark::State& state) {
  const auto hi = inference::HiPolicy::from_model(model(), 1);
  const auto s = probe_state();
  std::mt19937_64 rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(inference::hi_act_no_critic(hi, s, rng).data());
}
BENCHMARK(BM_HiActNoCritic);

void BM_HiActBatch(benchmark::State& state) {
  const auto hi = inference::HiPolicy::from_model(model(), 5);
  const Matrix<double> states = probe_state().replicate(1, state.range(0));
  std::mt19937_64 rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(inference::hi_act_batch(hi, states, rng).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HiActBatch)->Arg(16)->Arg(64);

void BM_DirectDistill(benchmark::State& state) {
  std::mt19937_64 init(5);
  const auto net = habitizer::make_distill_net(kStateDim, kActionDim, {128, 128}, init);
  const Vector<float> s = probe_state().cast<float>();
  for (auto _ : state) benchmark::DoNotOptimize(nn::mlp_forward(net, s).data());
}
BENCHMARK(BM_DirectDistill);

void BM_TeacherPlan(benchmark::State& state) {
  std::mt19937_64 init(6);
  const auto teacher = planner::make_planner(kStateDim, kActionDim, planner::PlannerConfig{}, init);
  const auto s = probe_state();
  std::mt19937_64 rng(7);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(planner::plan(teacher, s, n, rng).best_action().data());
}
BENCHMARK(BM_TeacherPlan)->Arg(1)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
