// Acceptance suite. Runs every criterion and prints one PASS/FAIL line each;
// exits nonzero when any criterion fails.
//
//   acceptance_test [--work DIR] [--config FILE] [--only 1,2,...]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "habi/envs/dataset.hpp"
#include "habi/envs/point_maze.hpp"
#include "habi/habitizer/losses.hpp"
#include "habi/inference/hi_policy.hpp"
#include "habi/latent/elbo_check.hpp"
#include "habi/nn/finite_diff.hpp"
#include "habi/nn/tape.hpp"
#include "habi/pipeline/config.hpp"
#include "habi/pipeline/stages.hpp"
#include "habi/planner/teacher.hpp"
#include "habi/select.hpp"

namespace {

using namespace habi;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects the detail lines of one criterion and its verdict.
class Criterion {
 public:
  Criterion(int id, std::string title) : id_(id), title_(std::move(title)), start_(Clock::now()) {}

  void check(bool ok, const std::string& what) {
    ok_ = ok_ && ok;
    std::cout << "    " << (ok ? "ok   " : "FAIL ") << what << "\n";
  }
  void note(const std::string& what) { std::cout << "    " << what << "\n"; }
  void budget(double limit_s) {
    const double t = seconds_since(start_);
    check(t < limit_s, "runtime " + fixed(t, 1) + " s < " + fixed(limit_s, 0) + " s");
  }
  bool finish() const {
    std::cout << (ok_ ? "PASS" : "FAIL") << " criterion " << id_ << ": " << title_ << "\n"
              << std::flush;
    return ok_;
  }

  static std::string fixed(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
  }
  static std::string sci(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
  }

 private:
  int id_;
  std::string title_;
  Clock::time_point start_;
  bool ok_ = true;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream f(path);
  std::string line;
  std::vector<std::map<std::string, std::string>> rows;
  if (!std::getline(f, line)) return rows;
  std::vector<std::string> header;
  std::istringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) header.push_back(c);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::map<std::string, std::string> row;
    std::size_t i = 0;
    for (std::string c; std::getline(ls, c, ',') && i < header.size(); ++i) row[header[i]] = c;
    rows.push_back(std::move(row));
  }
  return rows;
}

void randomize_biases(nn::MlpParams<double>& net) {
  for (auto& l : net.layers) l.bias.setRandom();
}

// ---------------------------------------------------------------------------
// 1. Reverse-mode gradients against central differences.

bool criterion_gradients() {
  Criterion c(1, "gradients of all six networks match central differences");
  constexpr double h = 1e-5, tol = 1e-4, kink = 1e-4;
  constexpr int kProbes = 10;

  std::map<std::string, double> worst;
  std::map<std::string, int> probes;

  {
    planner::PlannerConfig cfg;
    cfg.horizon = 2;
    cfg.diffusion_steps = 6;
    cfg.denoiser_hidden = {12, 10};
    cfg.value_hidden = {9, 7};
    for (std::uint64_t seed = 0; probes["denoiser"] < kProbes && seed < 200; ++seed) {
      std::mt19937_64 rng(seed);
      std::srand(static_cast<unsigned>(seed));
      auto p = planner::make_planner(3, 2, cfg, rng);
      auto den = p.denoiser.cast<double>();
      auto val = p.value_net.cast<double>();
      randomize_biases(den);
      randomize_biases(val);
      const Matrix<double> s = Matrix<double>::Random(3, 5);
      const Matrix<double> x0 = Matrix<double>::Random(4, 5);
      const Matrix<double> eps = Matrix<double>::Random(4, 5);
      const std::vector<int> t = {1, 3, 6, 2, 5};
      const auto in = planner::ddpm_inputs(p.schedule, s, x0, eps, t);
      const Matrix<double> a = Matrix<double>::Random(2, 5);
      const Vector<double> y = Vector<double>::Random(5);
      Matrix<double> vin(5, 5);
      vin << s, a;
      if (nn::min_abs_relu_preactivation(den, in) < kink ||
          nn::min_abs_relu_preactivation(val, vin) < kink) {
        continue;
      }
      nn::MlpParams<double> g, gv;
      planner::ddpm_loss(den, in, eps, &g);
      const auto fd = nn::finite_diff_grad([&] { return planner::ddpm_loss(den, in, eps); }, den, h);
      worst["denoiser"] = std::max(worst["denoiser"], nn::max_relative_error(g, fd));
      planner::value_loss(val, s, a, y, &gv);
      const auto fdv = nn::finite_diff_grad([&] { return planner::value_loss(val, s, a, y); }, val, h);
      worst["value"] = std::max(worst["value"], nn::max_relative_error(gv, fdv));
      ++probes["denoiser"];
      ++probes["value"];
    }
  }

  {
    habitizer::ModelConfig mc;
    mc.latent_dim = 4;
    mc.hidden = {7, 6};
    mc.critic_hidden = {8};
    for (std::uint64_t seed = 0; probes["prior"] < kProbes && seed < 400; ++seed) {
      std::mt19937_64 rng(100 + seed);
      std::srand(static_cast<unsigned>(seed));
      auto m = habitizer::make_habi_model<double>(3, 2, mc, rng);
      for (auto* net : {&m.prior.mu, &m.prior.xi, &m.posterior.mu, &m.posterior.xi, &m.decoder,
                        &m.critic}) {
        randomize_biases(*net);
      }
      const Matrix<double> s = Matrix<double>::Random(3, 4), a = Matrix<double>::Random(2, 4);
      const Matrix<double> noise = Matrix<double>::Random(4, 4);
      const Matrix<double> cand = Matrix<double>::Random(2, 12), q = Matrix<double>::Random(3, 4);

      Matrix<double> post_in(5, 4);
      post_in << s, a;
      Matrix<double> z(4, 4);
      for (Index j = 0; j < 4; ++j) {
        const auto g = latent::encode_posterior(m.posterior, Vector<double>(s.col(j)),
                                                Vector<double>(a.col(j)));
        z.col(j) = latent::reparam_sample(g, Vector<double>(noise.col(j)));
      }
      Matrix<double> cin(6, 12);
      for (Index j = 0; j < 12; ++j) cin.col(j) << z.col(j / 3), cand.col(j);
      const double margin = std::min({nn::min_abs_relu_preactivation(m.prior.mu, s),
                                      nn::min_abs_relu_preactivation(m.prior.xi, s),
                                      nn::min_abs_relu_preactivation(m.posterior.mu, post_in),
                                      nn::min_abs_relu_preactivation(m.posterior.xi, post_in),
                                      nn::min_abs_relu_preactivation(m.decoder, z),
                                      nn::min_abs_relu_preactivation(m.critic, cin)});
      if (margin < kink) continue;

      constexpr double beta = 0.7;
      const auto norm = habitizer::ErrorNorm::kEuclidean;
      habitizer::PolicyGrads<double> g;
      habitizer::policy_loss(m, s, a, noise, beta, norm, &g);
      const auto loss = [&] { return habitizer::policy_loss(m, s, a, noise, beta, norm).total; };
      const auto err = [&](const nn::MlpParams<double>& analytic, nn::MlpParams<double>& net) {
        return nn::max_relative_error(analytic, nn::finite_diff_grad(loss, net, h));
      };
      worst["prior"] = std::max({worst["prior"], err(g.prior.mu, m.prior.mu), err(g.prior.xi, m.prior.xi)});
      worst["posterior"] = std::max({worst["posterior"], err(g.posterior.mu, m.posterior.mu),
                                     err(g.posterior.xi, m.posterior.xi)});
      worst["decoder"] = std::max(worst["decoder"], err(g.decoder, m.decoder));
      nn::MlpParams<double> gc;
      habitizer::critic_batch_loss(m, s, a, noise, cand, q, norm, &gc);
      const auto fdc = nn::finite_diff_grad(
          [&] { return habitizer::critic_batch_loss(m, s, a, noise, cand, q, norm); }, m.critic, h);
      worst["critic"] = std::max(worst["critic"], nn::max_relative_error(gc, fdc));
      for (const char* n : {"prior", "posterior", "decoder", "critic"}) ++probes[n];
    }
  }

  for (const char* n : {"denoiser", "value", "prior", "posterior", "decoder", "critic"}) {
    c.check(probes[n] >= kProbes && worst[n] < tol,
            std::string(n) + ": " + std::to_string(probes[n]) + " probes, max rel err " +
                Criterion::sci(worst[n]) + " < 1e-4");
  }
  c.budget(120.0);
  return c.finish();
}

// ---------------------------------------------------------------------------
// 2. Closed-form KL against Monte Carlo and hand values.

bool criterion_kl() {
  Criterion c(2, "closed-form KL matches Monte Carlo and hand values");
  std::mt19937_64 rng(20240607);
  std::normal_distribution<double> n01(0.0, 1.0);
  const auto random_gaussian = [&](int dim) {
    latent::DiagonalGaussian<double> g;
    g.mu = Vector<double>(dim);
    g.sigma = Vector<double>(dim);
    for (int i = 0; i < dim; ++i) {
      g.mu(i) = n01(rng);
      g.sigma(i) = std::exp(0.5 * n01(rng));
    }
    return g;
  };

  constexpr int kPairs = 20, kDim = 8, kSamples = 1'000'000;
  int within = 0;
  double worst_z = 0.0;
  for (int pair = 0; pair < kPairs; ++pair) {
    const auto q = random_gaussian(kDim), p = random_gaussian(kDim);
    double sum = 0.0, sum_sq = 0.0;
    Vector<double> z(kDim);
    for (int s = 0; s < kSamples; ++s) {
      for (int i = 0; i < kDim; ++i) z(i) = q.mu(i) + q.sigma(i) * n01(rng);
      const double f = latent::log_density(q, z) - latent::log_density(p, z);
      sum += f;
      sum_sq += f * f;
    }
    const double mean = sum / kSamples;
    const double se = std::sqrt((sum_sq / kSamples - mean * mean) / (kSamples - 1));
    const double zscore = std::abs(latent::kl_divergence(q, p) - mean) / se;
    worst_z = std::max(worst_z, zscore);
    within += zscore <= 3.0;
  }
  c.check(within == kPairs, std::to_string(within) + "/" + std::to_string(kPairs) +
                                " pairs within 3 SE of the 1e6-sample estimate (worst " +
                                Criterion::fixed(worst_z, 2) + " SE)");

  bool zero = true;
  for (int i = 0; i < 20; ++i) {
    const auto q = random_gaussian(kDim);
    zero = zero && latent::kl_divergence(q, q) == 0.0;
  }
  c.check(zero, "KL(q || q) == 0 exactly on 20 random Gaussians");

  const auto scalar = [](double mu, double sigma) {
    latent::DiagonalGaussian<double> g;
    g.mu = Vector<double>::Constant(1, mu);
    g.sigma = Vector<double>::Constant(1, sigma);
    return g;
  };
  const double unit_shift = latent::kl_divergence(scalar(1.0, 1.0), scalar(0.0, 1.0));
  const double doubled = latent::kl_divergence(scalar(0.0, 2.0), scalar(0.0, 1.0));
  const double doubled_exact = 1.5 - std::numbers::ln2;
  c.check(std::abs(unit_shift - 0.5) <= 1e-12,
          "KL(N(1,1) || N(0,1)) = " + Criterion::fixed(unit_shift, 15));
  c.check(std::abs(doubled - doubled_exact) <= 1e-12 && std::abs(doubled - 0.80685) < 1e-5,
          "KL(N(0,2^2) || N(0,1)) = " + Criterion::fixed(doubled, 15));
  c.budget(60.0);
  return c.finish();
}

// ---------------------------------------------------------------------------
// 3. ELBO is a lower bound on the evidence, tight at the exact posterior.

bool criterion_elbo() {
  Criterion c(3, "ELBO bounds the log evidence and is tight at the exact posterior");
  latent::LinearGaussianModel m;
  m.A = Matrix<double>::Zero(3, 3);
  m.A.diagonal() << 1.5, -0.8, 0.6;
  m.b = Vector<double>(3);
  m.b << 0.2, -0.1, 0.05;
  m.noise_sigma = 0.7;
  m.prior.mu = Vector<double>::Zero(3);
  m.prior.sigma = Vector<double>::Ones(3);
  m.x = Vector<double>(3);
  m.x << 0.9, 0.4, -0.3;

  std::mt19937_64 rng(77);
  std::normal_distribution<double> n01(0.0, 1.0);
  constexpr int kDraws = 50, kMc = 20000;
  int below = 0;
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kDraws; ++i) {
    latent::DiagonalGaussian<double> q;
    q.mu = Vector<double>(3);
    q.sigma = Vector<double>(3);
    for (int d = 0; d < 3; ++d) {
      q.mu(d) = n01(rng);
      q.sigma(d) = std::exp(0.5 * n01(rng));
    }
    const auto est = latent::elbo_bound_check(m, q, m.prior, kMc, rng);
    const double slack = 3.0 * est.log_evidence_stderr;
    worst_gap = std::max(worst_gap, est.elbo - est.log_evidence);
    below += est.elbo <= est.log_evidence + slack;
  }
  c.check(below == kDraws, std::to_string(below) + "/" + std::to_string(kDraws) +
                               " random q: elbo <= log-evidence estimate + 3 SE (max elbo - "
                               "evidence " + Criterion::sci(worst_gap) + ")");

  const auto est = latent::elbo_bound_check(m, m.exact_posterior(), m.prior, 100000, rng);
  const double se = std::hypot(est.elbo_stderr, est.log_evidence_stderr);
  c.check(std::abs(est.elbo - est.log_evidence) <= 3.0 * se,
          "exact posterior: |elbo - log-evidence estimate| = " +
              Criterion::sci(std::abs(est.elbo - est.log_evidence)) + " <= 3 SE = " +
              Criterion::sci(3.0 * se));
  c.check(std::abs(est.elbo - m.log_evidence()) <= 3.0 * est.elbo_stderr,
          "exact posterior: |elbo - closed-form log p(x)| = " +
              Criterion::sci(std::abs(est.elbo - m.log_evidence())) + " <= 3 SE = " +
              Criterion::sci(3.0 * est.elbo_stderr));
  c.budget(120.0);
  return c.finish();
}

// ---------------------------------------------------------------------------
// 4-6 share one full pipeline run.

struct PipelineRun {
  pipeline::RunConfig config;
  fs::path out;
  double seconds = 0.0;
  double bench_seconds = 0.0;
  bool ok = false;
  std::string error;
};

PipelineRun run_pipeline(const pipeline::RunConfig& config, const fs::path& out) {
  PipelineRun r;
  r.config = config;
  r.out = out;
  fs::remove_all(out);
  fs::create_directories(out);
  std::ofstream log(out / "pipeline.log");
  const auto t0 = Clock::now();
  try {
    pipeline::run_gen_data(config, out, log);
    pipeline::run_train_planner(config, out, log);
    pipeline::run_habitize(config, out, log);
    pipeline::run_eval(config, out, log);
    const auto tb = Clock::now();
    pipeline::run_bench(config, out, log);
    r.bench_seconds = seconds_since(tb);
    pipeline::run_report(config, out, log);
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

bool pipeline_failed(Criterion& c, const PipelineRun& run) {
  if (run.ok) return false;
  c.check(false, "pipeline run failed: " + run.error);
  return true;
}

bool criterion_beta(const PipelineRun& run) {
  Criterion c(4, "adaptive beta steers the smoothed KL into [target/2, 2 target]");
  if (pipeline_failed(c, run)) return c.finish();
  const double target = run.config.habi.target_kl;
  const double lo = target / 2.0, hi = 2.0 * target;
  const double beta_min = 1e-4, beta_max = 1e4;
  const auto habi_dir = pipeline::latest_stage_dir(run.out, pipeline::Stage::kHabitize);
  c.check(run.config.habi.log_every == 1, "metrics logged every step");
  for (int k = 0; k < run.config.habi.seeds; ++k) {
    const auto rows = read_csv(pipeline::habi_run_dir(habi_dir, k) / "metrics.csv");
    const auto steps = static_cast<long>(run.config.habi.steps);
    long entered = -1, inside_after = 0, after = 0;
    bool clamped = false;
    double beta_low = std::numeric_limits<double>::infinity(), beta_high = 0.0;
    for (const auto& r : rows) {
      const long step = std::stol(r.at("step"));
      const double kl = std::stod(r.at("kl_smooth"));
      const double beta = std::stod(r.at("beta"));
      beta_low = std::min(beta_low, beta);
      beta_high = std::max(beta_high, beta);
      clamped = clamped || beta <= beta_min * (1.0 + 1e-9) || beta >= beta_max * (1.0 - 1e-9);
      const bool in = kl >= lo && kl <= hi;
      if (entered < 0 && in) entered = step;
      if (entered >= 0) {
        ++after;
        inside_after += in;
      }
    }
    const double frac = after > 0 ? static_cast<double>(inside_after) / after : 0.0;
    const std::string tag = "seed " + std::to_string(k) + ": ";
    c.check(static_cast<long>(rows.size()) == steps,
            tag + std::to_string(rows.size()) + " logged steps of " + std::to_string(steps));
    c.check(entered >= 0 && entered <= steps / 2,
            tag + "enters band at step " + std::to_string(entered) + " <= " +
                std::to_string(steps / 2));
    c.check(frac >= 0.8, tag + "in band for " + Criterion::fixed(100.0 * frac, 1) +
                             "% of the remaining steps (>= 80%)");
    c.check(!clamped, tag + "beta stays in (" + Criterion::sci(beta_low) + ", " +
                          Criterion::sci(beta_high) + "), clamp at [1e-4, 1e4]");
  }
  return c.finish();
}

bool criterion_speed(const PipelineRun& run) {
  Criterion c(5, "HI(N=5) is >= 100x faster than the teacher and >= 500 Hz");
  if (pipeline_failed(c, run)) return c.finish();
  const auto bench = read_csv(pipeline::require_artifact(run.out, pipeline::Stage::kBench,
                                                         pipeline::kBenchFile));
  std::optional<double> teacher, hi5;
  for (const auto& r : bench) {
    if (r.at("policy") == pipeline::kTeacherId) teacher = std::stod(r.at("hz"));
    if (r.at("policy") == pipeline::hi_policy_id(5)) hi5 = std::stod(r.at("hz"));
  }
  c.check(run.config.planner.diffusion_steps == 20 && run.config.planner.n_candidates_train == 50,
          "teacher runs T = 20 denoising steps over n = 50 candidates");
  c.check(run.config.bench.threads == 1, "single thread, single stream");
  if (!teacher || !hi5) {
    c.check(false, "bench.csv lacks the teacher or hi_n5 row");
    return c.finish();
  }
  const double speedup = *hi5 / *teacher;
  c.note("teacher " + Criterion::fixed(*teacher, 2) + " Hz, HI(N=5) " + Criterion::fixed(*hi5, 1) +
         " Hz");
  c.check(speedup >= 100.0, "speedup " + Criterion::fixed(speedup, 1) + "x >= 100x");
  c.check(*hi5 >= 500.0, "HI(N=5) " + Criterion::fixed(*hi5, 1) + " Hz >= 500 Hz");
  c.check(run.bench_seconds < 300.0,
          "bench runtime " + Criterion::fixed(run.bench_seconds, 1) + " s < 300 s");
  return c.finish();
}

bool criterion_parity(const PipelineRun& run) {
  Criterion c(6, "HI(N=5) reaches teacher parity and beats no-critic and direct distillation");
  if (pipeline_failed(c, run)) return c.finish();
  const auto eval = read_csv(pipeline::require_artifact(run.out, pipeline::Stage::kEval,
                                                        pipeline::kEvalFile));
  const int seeds = run.config.habi.seeds;
  c.check(run.config.run.env == "medium", "medium maze");
  c.check(seeds == 3 && run.config.eval.episodes >= 100,
          std::to_string(seeds) + " training seeds x " + std::to_string(run.config.eval.episodes) +
              " episodes");
  std::optional<double> teacher;
  std::map<std::string, std::vector<double>> by_policy;
  for (const auto& r : eval) {
    const double score = std::stod(r.at("normalized_score"));
    if (r.at("policy") == pipeline::kTeacherId) {
      teacher = score;
    } else {
      by_policy[r.at("policy")].push_back(score);
    }
  }
  const auto& hi5 = by_policy[pipeline::hi_policy_id(5)];
  const auto& plain = by_policy[pipeline::kNoCriticId];
  const auto& distill = by_policy[pipeline::kDistillId];
  if (!teacher || static_cast<int>(hi5.size()) != seeds ||
      static_cast<int>(plain.size()) != seeds || static_cast<int>(distill.size()) != seeds) {
    c.check(false, "eval.csv lacks rows for the teacher, hi_n5, hi_no_critic or distill");
    return c.finish();
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  std::ostringstream per_seed;
  for (int k = 0; k < seeds; ++k) {
    per_seed << " seed " << k << ": HI5 " << Criterion::fixed(hi5[k], 1) << " no-critic "
             << Criterion::fixed(plain[k], 1) << " distill " << Criterion::fixed(distill[k], 1)
             << ";";
  }
  c.note("teacher " + Criterion::fixed(*teacher, 1) + ";" + per_seed.str());
  const double m5 = mean(hi5), mp = mean(plain), md = mean(distill);
  int wins_plain = 0, wins_distill = 0;
  for (int k = 0; k < seeds; ++k) {
    wins_plain += hi5[k] >= plain[k];
    wins_distill += hi5[k] >= distill[k];
  }
  c.check(m5 >= 0.9 * *teacher, "(a) mean HI(N=5) " + Criterion::fixed(m5, 2) + " >= 0.9 x teacher " +
                                    Criterion::fixed(0.9 * *teacher, 2));
  c.check(m5 >= mp && wins_plain >= 2, "(b) mean HI(N=5) " + Criterion::fixed(m5, 2) +
                                           " >= no-critic " + Criterion::fixed(mp, 2) + ", " +
                                           std::to_string(wins_plain) + "/3 seeds");
  c.check(m5 >= md && wins_distill >= 2, "(c) mean HI(N=5) " + Criterion::fixed(m5, 2) +
                                             " >= direct distill " + Criterion::fixed(md, 2) +
                                             ", " + std::to_string(wins_distill) + "/3 seeds");
  c.check(run.seconds < 1800.0,
          "full pipeline runtime " + Criterion::fixed(run.seconds, 0) + " s < 1800 s");
  return c.finish();
}

// ---------------------------------------------------------------------------
// 7. Determinism of every training stage.

bool criterion_determinism(const fs::path& work) {
  Criterion c(7, "re-running a stage with the same config and seed is bit-identical");
  auto config = pipeline::mini_config();
  config.run.seed = 11;
  const fs::path a = work / "determinism_a", b = work / "determinism_b";
  for (const auto& out : {a, b}) {
    fs::remove_all(out);
    std::ostringstream log;
    pipeline::run_gen_data(config, out, log);
    pipeline::run_train_planner(config, out, log);
    pipeline::run_habitize(config, out, log);
    pipeline::run_eval(config, out, log);
  }
  // Every file but the provenance listing, which names the run's own directories.
  int compared = 0, differing = 0;
  for (auto stage : {pipeline::Stage::kGenData, pipeline::Stage::kTrainPlanner,
                     pipeline::Stage::kHabitize, pipeline::Stage::kEval}) {
    const auto da = pipeline::latest_stage_dir(a, stage);
    const auto db = pipeline::latest_stage_dir(b, stage);
    for (const auto& e : fs::recursive_directory_iterator(da)) {
      if (!e.is_regular_file() || e.path().filename() == pipeline::kInputsFile) continue;
      const auto rel = fs::relative(e.path(), da);
      ++compared;
      if (slurp(e.path()) != slurp(db / rel)) {
        ++differing;
        c.note("differs: " + std::string(pipeline::stage_name(stage)) + "/" + rel.string());
      }
    }
  }
  const auto ha = pipeline::latest_stage_dir(a, pipeline::Stage::kHabitize);
  int checkpoints = 0;
  for (const auto& e : fs::directory_iterator(pipeline::habi_run_dir(ha, 0) / "checkpoints")) {
    checkpoints += e.is_regular_file();
  }
  c.check(checkpoints > 0, std::to_string(checkpoints) + " checkpoints per habitization run");
  c.check(differing == 0 && compared > 0,
          std::to_string(compared - differing) + "/" + std::to_string(compared) +
              " artifacts identical (metrics.csv, checkpoints, models, datasets, eval)");
  fs::remove_all(a);
  fs::remove_all(b);
  c.budget(300.0);
  return c.finish();
}

// ---------------------------------------------------------------------------
// 8. Structural invariants.

// An axis-aligned move from p to q crosses wall w.
bool move_crosses_wall(double px, double py, double qx, double qy, const envs::Wall& w) {
  constexpr double tol = 1e-9;
  if (py == qy) {
    if (w.vertical()) {
      const double lo = std::min(w.y1, w.y2), hi = std::max(w.y1, w.y2);
      if (py < lo || py > hi) return false;
      return (px < w.x1 - tol && qx > w.x1 + tol) || (px > w.x1 + tol && qx < w.x1 - tol);
    }
    if (std::abs(py - w.y1) > tol) return false;
    const double lo = std::min(w.x1, w.x2), hi = std::max(w.x1, w.x2);
    return std::max(px, qx) > lo + tol && std::min(px, qx) < hi - tol && px != qx;
  }
  if (!w.vertical()) {
    const double lo = std::min(w.x1, w.x2), hi = std::max(w.x1, w.x2);
    if (px < lo || px > hi) return false;
    return (py < w.y1 - tol && qy > w.y1 + tol) || (py > w.y1 + tol && qy < w.y1 - tol);
  }
  if (std::abs(px - w.x1) > tol) return false;
  const double lo = std::min(w.y1, w.y2), hi = std::max(w.y1, w.y2);
  return std::max(py, qy) > lo + tol && std::min(py, qy) < hi - tol;
}

habitizer::HabiModel<float> small_float_model(std::uint64_t seed) {
  habitizer::ModelConfig mc;
  mc.latent_dim = 4;
  mc.hidden = {16, 16};
  mc.critic_hidden = {16};
  std::mt19937_64 rng(seed);
  return habitizer::make_habi_model<float>(4, 2, mc, rng);
}

bool criterion_invariants() {
  Criterion c(8, "structural invariants");

  {  // Critic loss sends no gradient into the posterior.
    habitizer::ModelConfig mc;
    mc.latent_dim = 4;
    mc.hidden = {7, 6};
    mc.critic_hidden = {8};
    std::mt19937_64 rng(1);
    std::srand(1);
    const auto m = habitizer::make_habi_model<double>(3, 2, mc, rng);
    const Matrix<double> s = Matrix<double>::Random(3, 4), a = Matrix<double>::Random(2, 4);
    const Matrix<double> noise = Matrix<double>::Random(4, 4);
    const Matrix<double> cand = Matrix<double>::Random(2, 12), q = Matrix<double>::Random(3, 4);
    Matrix<double> in(5, 4);
    in << s, a;
    nn::Tape<double> tape;
    auto post_grads = m.posterior.zeros_like();
    nn::MlpParams<double> critic_grads;
    auto post = latent::encode_taped(m.posterior, tape, tape.constant(in), &post_grads);
    auto z = latent::reparam_taped(tape, post, noise);
    auto loss = habitizer::critic_taped(m.critic, tape, z, cand, q, habitizer::ErrorNorm::kEuclidean,
                                        &critic_grads);
    tape.backward(loss);
    double posterior_mass = 0.0, critic_mass = 0.0;
    for (const auto* g : {&post_grads.mu, &post_grads.xi}) {
      for (const auto& l : g->layers) posterior_mass += l.weight.cwiseAbs().sum() + l.bias.cwiseAbs().sum();
    }
    for (const auto& l : critic_grads.layers) critic_mass += l.weight.cwiseAbs().sum();
    c.check(posterior_mass == 0.0 && critic_mass > 0.0,
            "critic loss: posterior gradient exactly 0, critic gradient nonzero");
  }

  {  // Inference never touches the posterior.
    auto m = small_float_model(7);
    const auto clean = inference::HiPolicy::from_model(m, 5);
    for (auto* net : {&m.posterior.mu, &m.posterior.xi}) {
      for (auto& l : net->layers) {
        l.weight.setConstant(std::numeric_limits<float>::quiet_NaN());
        l.bias.setConstant(std::numeric_limits<float>::quiet_NaN());
      }
    }
    const auto poisoned = inference::HiPolicy::from_model(m, 5);
    bool same = true;
    Vector<double> s(4);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      s << 0.1 + 0.015 * static_cast<double>(seed), 0.6, -0.1, 0.2;
      std::mt19937_64 ra(seed), rb(seed);
      const auto x = inference::hi_act(clean, s, ra);
      const auto y = inference::hi_act(poisoned, s, rb);
      same = same && x.action == y.action && y.scores.allFinite();
    }
    c.check(same, "inference with NaN posterior weights is unchanged on 50 states");
  }

  {  // Argmax with lowest-index tie-break, and the chosen candidate is a maximizer.
    Vector<double> ties(6);
    ties << 0.1, 0.7, 0.3, 0.7, 0.7, -1.0;
    bool ok = argmax_lowest(ties) == 1;
    ok = ok && argmax_lowest(Vector<double>(Vector<double>::Constant(4, 2.0))) == 0;
    const auto p = inference::HiPolicy::from_model(small_float_model(2), 5);
    inference::Scorer stub = [](const Matrix<float>&, const Matrix<float>&) {
      Vector<float> v(5);
      v << 0.2f, 0.9f, 0.1f, 0.9f, 0.3f;
      return v;
    };
    std::mt19937_64 rng(3);
    Vector<double> s(4);
    s << 0.3, 0.6, -0.1, 0.2;
    ok = ok && inference::hi_act(p, s, rng, &stub).chosen == 1;
    for (int i = 0; i < 200 && ok; ++i) {
      s(0) = 0.05 + 0.0045 * i;
      const auto d = inference::hi_act(p, s, rng);
      ok = d.scores(d.chosen) == d.scores.maxCoeff();
      for (Index j = 0; j < d.chosen && ok; ++j) ok = d.scores(j) < d.scores(d.chosen);
    }
    c.check(ok, "argmax picks the lowest index among ties; HI picks a maximizing candidate");
  }

  {  // No wall penetration.
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    long steps = 0, crossings = 0, escapes = 0;
    for (const auto& name : envs::maze_preset_names()) {
      envs::PointMazeEnv env(envs::maze_preset(name), name);
      env.reset(7, envs::StartMode::kAnywhere);
      Vector<double> act(2);
      for (int k = 0; k < 100000; ++k) {
        if (k % 8 == 0) act << u(rng), u(rng);
        const Vector<double> before = env.state();
        const auto r = env.step(act);
        const auto& after = r.next_state;
        escapes += after(0) < 0.0 || after(0) > 1.0 || after(1) < 0.0 || after(1) > 1.0;
        for (const auto& w : env.layout().walls) {
          crossings += move_crosses_wall(before(0), before(1), after(0), before(1), w);
          crossings += move_crosses_wall(after(0), before(1), after(0), after(1), w);
        }
        ++steps;
        if (r.done) env.reset(static_cast<std::uint64_t>(k), envs::StartMode::kAnywhere);
      }
    }
    c.check(crossings == 0 && escapes == 0,
            std::to_string(steps) + " random steps over all mazes: " + std::to_string(crossings) +
                " wall crossings, " + std::to_string(escapes) + " escapes");
  }

  {  // Returns-to-go satisfy the discounted backup.
    const auto env = envs::make_env("medium");
    const auto data = envs::generate_offline_dataset(*env, envs::Behavior::kMixed, 60, 5);
    double worst = 0.0;
    long terminal = 0;
    for (std::size_t k = 0; k < data.episode_count(); ++k) {
      const auto end = data.episode_end(k);
      for (std::size_t i = data.episode_starts[k]; i < end; ++i) {
        const double next = i + 1 < end ? data.returns_to_go[i + 1] : 0.0;
        terminal += i + 1 == end;
        worst = std::max(worst, std::abs(data.returns_to_go[i] -
                                         (data.rewards[i] + data.gamma * next)));
      }
    }
    c.check(worst <= 1e-12 && terminal == static_cast<long>(data.episode_count()),
            "returns-to-go: max |G_t - (r_t + gamma G_t+1)| = " + Criterion::sci(worst) + " over " +
                std::to_string(data.size()) + " transitions");
  }
  return c.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string work = "acceptance";
  std::string config_path;
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for pipeline runs")->capture_default_str();
  app.add_option("--config", config_path, "Config for the full pipeline run (criteria 4-6)")
      ->check(CLI::ExistingFile);
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> selected(only.begin(), only.end());
  const auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };
  const fs::path work_dir = work;
  fs::create_directories(work_dir);

  std::map<int, bool> results;
  try {
    if (want(1)) results[1] = criterion_gradients();
    if (want(2)) results[2] = criterion_kl();
    if (want(3)) results[3] = criterion_elbo();
    if (want(4) || want(5) || want(6)) {
      const auto config = config_path.empty() ? pipeline::RunConfig{}
                                              : pipeline::load_config(config_path);
      std::cout << "  full pipeline run in " << (work_dir / "pipeline").string() << "\n"
                << std::flush;
      const auto run = run_pipeline(config, work_dir / "pipeline");
      std::cout << "  pipeline finished in " << Criterion::fixed(run.seconds, 0) << " s\n";
      if (want(4)) results[4] = criterion_beta(run);
      if (want(5)) results[5] = criterion_speed(run);
      if (want(6)) results[6] = criterion_parity(run);
    }
    if (want(7)) results[7] = criterion_determinism(work_dir);
    if (want(8)) results[8] = criterion_invariants();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance suite aborted: " << e.what() << "\n";
    return 1;
  }

  int failed = 0;
  for (const auto& [id, ok] : results) failed += !ok;
  std::cout << "acceptance: " << results.size() - failed << "/" << results.size()
            << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
