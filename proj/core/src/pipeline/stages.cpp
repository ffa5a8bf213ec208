#include "habi/pipeline/stages.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "habi/envs/dataset.hpp"
#include "habi/envs/evaluate.hpp"
#include "habi/habitizer/teacher_data.hpp"
#include "habi/habitizer/trainer.hpp"
#include "habi/inference/frequency.hpp"
#include "habi/inference/hi_policy.hpp"
#include "habi/pipeline/report.hpp"
#include "habi/planner/teacher.hpp"
#include "habi/rng.hpp"

namespace habi::pipeline {

namespace fs = std::filesystem;

namespace {

// Sub-streams of the run seed.
constexpr std::uint64_t kDataStream = 0xda7a;
constexpr std::uint64_t kPlannerInitStream = 0x91a0;
constexpr std::uint64_t kPlannerTrainStream = 0x91a1;
constexpr std::uint64_t kTeacherStatesStream = 0x57a7e5;
constexpr std::uint64_t kTeacherPlanStream = 0x7eac4e;
constexpr std::uint64_t kTrainingStream = 0x5eed;
constexpr std::uint64_t kDistillInitStream = 0xd15;
constexpr std::uint64_t kDistillTrainStream = 0xd16;
constexpr std::uint64_t kEpisodeStream = 0xe7a1;
constexpr std::uint64_t kAnchorStream = 0xa4c;
constexpr std::uint64_t kBenchStream = 0xbe4c;

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// Config snapshot plus the upstream directories this stage read.
void write_provenance(const fs::path& dir, const RunConfig& config,
                      const std::vector<fs::path>& inputs) {
  write_text(dir / kConfigFile, to_text(config));
  std::string list;
  for (const auto& p : inputs) list += p.string() + "\n";
  write_text(dir / kInputsFile, list);
}

std::unique_ptr<envs::Env> make_env_checked(const RunConfig& config) {
  config.validate();
  return envs::make_env(config.run.env);
}

Vector<double> distill_act(const nn::MlpParams<float>& net, const Vector<double>& s) {
  return nn::mlp_forward(net, Vector<float>(s.cast<float>())).cast<double>().cwiseMax(-1.0).cwiseMin(1.0);
}

struct TrainedSeed {
  habitizer::HabiModel<float> model;
  nn::MlpParams<float> distill;
};

std::vector<TrainedSeed> load_trained(const RunConfig& config, const fs::path& habi_dir) {
  std::vector<TrainedSeed> out;
  for (int k = 0; k < config.habi.seeds; ++k) {
    const auto model_path = habi_run_dir(habi_dir, k) / "model.bin";
    const auto distill_path = distill_dir(habi_dir, k) / "distill.bin";
    if (!fs::exists(model_path)) throw MissingArtifact(model_path);
    if (!fs::exists(distill_path)) throw MissingArtifact(distill_path);
    out.push_back({habitizer::load_model(model_path), habitizer::load_distill_net(distill_path)});
  }
  return out;
}

}  // namespace

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kGenData:
      return "gen-data";
    case Stage::kTrainPlanner:
      return "train-planner";
    case Stage::kHabitize:
      return "habitize";
    case Stage::kEval:
      return "eval";
    case Stage::kBench:
      return "bench";
    case Stage::kReport:
      return "report";
  }
  return "unknown";
}

std::string hi_policy_id(int n_candidates) { return "hi_n" + std::to_string(n_candidates); }

fs::path habi_run_dir(const fs::path& stage_dir, int k) {
  return stage_dir / ("seed_" + std::to_string(k));
}

fs::path distill_dir(const fs::path& stage_dir, int k) {
  return stage_dir / ("distill_" + std::to_string(k));
}

std::uint64_t training_seed(const RunConfig& config, int k) {
  return derive_seed(config.run.seed, kTrainingStream, static_cast<std::uint64_t>(k));
}

fs::path new_stage_dir(const fs::path& out, Stage stage) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  const fs::path parent = out / std::string(stage_name(stage));
  fs::create_directories(parent);
  fs::path dir = parent / stamp;
  for (int i = 1; !fs::create_directory(dir); ++i) {
    dir = parent / (std::string(stamp) + "-" + std::to_string(i));
  }
  return dir;
}

void mark_latest(const fs::path& out, Stage stage, const fs::path& dir) {
  const fs::path parent = out / std::string(stage_name(stage));
  const fs::path tmp = parent / "LATEST.tmp";
  write_text(tmp, dir.filename().string() + "\n");
  fs::rename(tmp, parent / "LATEST");
}

fs::path latest_stage_dir(const fs::path& out, Stage stage) {
  const fs::path marker = out / std::string(stage_name(stage)) / "LATEST";
  std::ifstream f(marker);
  std::string name;
  if (!f || !std::getline(f, name) || name.empty()) throw MissingArtifact(marker);
  const fs::path dir = out / std::string(stage_name(stage)) / name;
  if (!fs::is_directory(dir)) throw MissingArtifact(dir);
  return dir;
}

fs::path require_artifact(const fs::path& out, Stage stage, const std::string& file) {
  const fs::path path = latest_stage_dir(out, stage) / file;
  if (!fs::exists(path)) throw MissingArtifact(path);
  return path;
}

fs::path run_gen_data(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const auto env = make_env_checked(config);
  envs::DatasetOptions opt;
  opt.noise_sigma = config.data.noise_sigma;
  opt.random_fraction = config.data.random_fraction;
  log << "[gen-data] " << config.data.episodes << " " << config.data.behavior << " episodes on "
      << config.run.env << "\n";
  const auto data =
      envs::generate_offline_dataset(*env, envs::parse_behavior(config.data.behavior),
                                     config.data.episodes,
                                     derive_seed(config.run.seed, kDataStream), opt);
  const auto dir = new_stage_dir(out, Stage::kGenData);
  data.save(dir / kDatasetFile);
  write_text(dir / "summary.txt", "transitions = " + std::to_string(data.size()) +
                                      "\nepisodes = " + std::to_string(data.episode_count()) +
                                      "\nsuccess_rate = " + fmt(data.success_rate()) + "\n");
  write_provenance(dir, config, {});
  mark_latest(out, Stage::kGenData, dir);
  log << "[gen-data] " << data.size() << " transitions -> " << dir.string() << "\n";
  return dir;
}

fs::path run_train_planner(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const auto env = make_env_checked(config);
  const auto data_path = require_artifact(out, Stage::kGenData, kDatasetFile);
  const auto data = envs::OfflineDataset::load(data_path);

  planner::PlannerConfig pc;
  pc.horizon = config.planner.horizon;
  pc.diffusion_steps = config.planner.diffusion_steps;
  pc.beta_start = config.planner.beta_start;
  pc.beta_end = config.planner.beta_end;
  pc.denoiser_hidden = config.planner.denoiser_hidden;
  pc.value_hidden = config.planner.value_hidden;
  pc.n_candidates_train = config.planner.n_candidates_train;
  std::mt19937_64 init(derive_seed(config.run.seed, kPlannerInitStream));
  auto teacher = planner::make_planner(env->state_dim(), env->action_dim(), pc, init);

  planner::PlannerTrainOptions opt;
  opt.denoiser_steps = config.planner.denoiser_steps;
  opt.value_steps = config.planner.value_steps;
  opt.batch = config.planner.batch;
  opt.lr = config.planner.lr;
  opt.seed = derive_seed(config.run.seed, kPlannerTrainStream);
  opt.log_every = 100;

  std::ostringstream metrics;
  metrics << "phase,step,loss\n";
  const auto record = [&](const char* phase, int step, double loss) {
    metrics << phase << "," << step << "," << fmt(loss) << "\n";
  };
  log << "[train-planner] denoiser " << opt.denoiser_steps << " steps\n";
  planner::train_denoiser(teacher, data, opt, record);
  log << "[train-planner] value " << opt.value_steps << " steps\n";
  planner::train_value(teacher, data, opt, record);

  const auto dir = new_stage_dir(out, Stage::kTrainPlanner);
  teacher.save(dir / kPlannerFile);
  write_text(dir / "metrics.csv", metrics.str());
  write_provenance(dir, config, {data_path.parent_path()});
  mark_latest(out, Stage::kTrainPlanner, dir);
  log << "[train-planner] -> " << dir.string() << "\n";
  return dir;
}

fs::path run_habitize(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const auto env = make_env_checked(config);
  const auto data_path = require_artifact(out, Stage::kGenData, kDatasetFile);
  const auto planner_path = require_artifact(out, Stage::kTrainPlanner, kPlannerFile);
  const auto data = envs::OfflineDataset::load(data_path);
  const auto teacher = planner::TeacherPlanner::load(planner_path);
  if (static_cast<std::size_t>(config.habi.teacher_states) > data.size()) {
    throw ConfigError("config: habi.teacher_states exceeds the dataset size " +
                      std::to_string(data.size()));
  }

  const auto dir = new_stage_dir(out, Stage::kHabitize);
  log << "[habitize] teacher dataset: " << config.habi.teacher_states << " states x "
      << teacher.n_candidates_train << " candidates\n";
  const auto states = habitizer::sample_states(data, static_cast<std::size_t>(config.habi.teacher_states),
                                               derive_seed(config.run.seed, kTeacherStatesStream));
  const auto td = habitizer::generate_teacher_dataset(teacher, states, teacher.n_candidates_train,
                                                      derive_seed(config.run.seed, kTeacherPlanStream),
                                                      config.run.threads);
  td.save(dir / kTeacherDataFile);

  habitizer::ModelConfig mc;
  mc.latent_dim = config.habi.latent_dim;
  mc.hidden = config.habi.hidden;
  mc.critic_hidden = config.habi.critic_hidden;
  mc.target_kl = config.habi.target_kl;
  mc.lr_beta = config.habi.lr_beta;
  for (int k = 0; k < config.habi.seeds; ++k) {
    const std::uint64_t seed = training_seed(config, k);
    habitizer::TrainConfig tc;
    tc.steps = config.habi.steps;
    tc.batch = config.habi.batch;
    tc.critic_batch = config.habi.critic_batch;
    tc.lr = config.habi.lr;
    tc.norm = config.habi.norm;
    tc.seed = seed;
    tc.log_every = config.habi.log_every;
    tc.checkpoint_every = config.habi.checkpoint_every;
    log << "[habitize] seed " << k + 1 << "/" << config.habi.seeds << ": " << tc.steps
        << " steps\n";
    habitizer::run_habitization(td, mc, tc, habi_run_dir(dir, k));

    habitizer::DistillConfig dc;
    dc.hidden = config.habi.hidden;
    dc.steps = config.habi.steps;
    dc.batch = config.habi.batch;
    dc.lr = config.habi.lr;
    dc.norm = config.habi.norm;
    dc.seed = derive_seed(seed, kDistillTrainStream);
    dc.log_every = config.habi.log_every;
    std::mt19937_64 init(derive_seed(seed, kDistillInitStream));
    auto net = habitizer::make_distill_net(td.state_dim, td.action_dim, dc.hidden, init);
    std::ostringstream metrics;
    metrics << "step,loss\n";
    log << "[habitize] direct distill " << k + 1 << "/" << config.habi.seeds << "\n";
    habitizer::train_direct_distill(net, td.states, td.best_actions, dc,
                                    [&](int step, double loss) {
                                      metrics << step << "," << fmt(loss) << "\n";
                                    });
    fs::create_directories(distill_dir(dir, k));
    habitizer::save_distill_net(distill_dir(dir, k) / "distill.bin", net);
    write_text(distill_dir(dir, k) / "metrics.csv", metrics.str());
  }
  write_provenance(dir, config, {data_path.parent_path(), planner_path.parent_path()});
  mark_latest(out, Stage::kHabitize, dir);
  log << "[habitize] -> " << dir.string() << "\n";
  return dir;
}

fs::path run_eval(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const auto env = make_env_checked(config);
  const auto planner_path = require_artifact(out, Stage::kTrainPlanner, kPlannerFile);
  const auto habi_dir = latest_stage_dir(out, Stage::kHabitize);
  const auto teacher = planner::TeacherPlanner::load(planner_path);
  const auto trained = load_trained(config, habi_dir);
  const int threads = config.run.threads;
  const auto start = config.eval.start;

  const auto anchors = envs::measure_anchors(*env, config.eval.anchor_episodes,
                                             derive_seed(config.run.seed, kAnchorStream), threads,
                                             start);
  const auto seeds = envs::episode_seeds(derive_seed(config.run.seed, kEpisodeStream),
                                         config.eval.episodes);

  std::ostringstream rows, returns;
  rows << "policy,train_seed,n_candidates,episodes,mean_return,stderr_return,success_rate,"
          "mean_length,normalized_score,normalized_stderr\n";
  returns << "policy,train_seed,episode,episode_seed,return\n";
  const auto record = [&](const std::string& id, const std::string& train_seed, int n,
                          const envs::EvalReport& r) {
    rows << id << "," << train_seed << "," << n << "," << r.episodes << "," << fmt(r.mean_return)
         << "," << fmt(r.stderr_return) << "," << fmt(r.success_rate) << ","
         << fmt(r.mean_length) << "," << fmt(*r.normalized_score) << ","
         << fmt(*r.normalized_stderr) << "\n";
    for (std::size_t e = 0; e < r.returns.size(); ++e) {
      returns << id << "," << train_seed << "," << e << "," << r.seeds[e] << ","
              << fmt(r.returns[e]) << "\n";
    }
    log << "[eval] " << id << (train_seed == "-" ? "" : " seed " + train_seed) << ": score "
        << *r.normalized_score << " +- " << *r.normalized_stderr << "\n";
  };

  const int n_teacher = teacher.n_candidates_train;
  record(kTeacherId, "-", n_teacher,
         envs::evaluate_policy(
             *env,
             [&](const Vector<double>& s, std::mt19937_64& rng) {
               return planner::plan(teacher, s, n_teacher, rng).best_action();
             },
             seeds, anchors, threads, start));
  for (int k = 0; k < config.habi.seeds; ++k) {
    const auto& t = trained[static_cast<std::size_t>(k)];
    const auto ks = std::to_string(k);
    for (int n : config.inference.candidates) {
      const auto hi = inference::HiPolicy::from_model(t.model, n);
      record(hi_policy_id(n), ks, n,
             envs::evaluate_policy(
                 *env,
                 [&](const Vector<double>& s, std::mt19937_64& rng) {
                   return inference::hi_act(hi, s, rng).action;
                 },
                 seeds, anchors, threads, start));
    }
    const auto hi1 = inference::HiPolicy::from_model(t.model, 1);
    record(kNoCriticId, ks, 1,
           envs::evaluate_policy(
               *env,
               [&](const Vector<double>& s, std::mt19937_64& rng) {
                 return inference::hi_act_no_critic(hi1, s, rng);
               },
               seeds, anchors, threads, start));
    record(kDistillId, ks, 0,
           envs::evaluate_policy(
               *env,
               [&](const Vector<double>& s, std::mt19937_64&) { return distill_act(t.distill, s); },
               seeds, anchors, threads, start));
  }

  const auto dir = new_stage_dir(out, Stage::kEval);
  write_text(dir / kEvalFile, rows.str());
  write_text(dir / kReturnsFile, returns.str());
  std::string seed_list;
  for (auto s : seeds) seed_list += std::to_string(s) + "\n";
  write_text(dir / "episode_seeds.txt", seed_list);
  write_text(dir / "anchors.txt", "expert_return = " + fmt(anchors.expert_return) +
                                      "\nrandom_return = " + fmt(anchors.random_return) +
                                      "\nepisodes = " + std::to_string(config.eval.anchor_episodes) +
                                      "\n");
  write_provenance(dir, config, {planner_path.parent_path(), habi_dir});
  mark_latest(out, Stage::kEval, dir);
  log << "[eval] -> " << dir.string() << "\n";
  return dir;
}

fs::path run_bench(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const auto env = make_env_checked(config);
  const auto planner_path = require_artifact(out, Stage::kTrainPlanner, kPlannerFile);
  const auto habi_dir = latest_stage_dir(out, Stage::kHabitize);
  const auto td_path = habi_dir / kTeacherDataFile;
  const auto model_path = habi_run_dir(habi_dir, 0) / "model.bin";
  const auto distill_path = distill_dir(habi_dir, 0) / "distill.bin";
  for (const auto& p : {td_path, model_path, distill_path}) {
    if (!fs::exists(p)) throw MissingArtifact(p);
  }
  const auto teacher = planner::TeacherPlanner::load(planner_path);
  const auto model = habitizer::load_model(model_path);
  const auto distill = habitizer::load_distill_net(distill_path);
  const auto td = habitizer::TeacherDataset::load(td_path);

  std::vector<Vector<double>> probes;
  const Index n_probe = std::min<Index>(config.bench.probe_states, td.states.cols());
  for (Index i = 0; i < n_probe; ++i) probes.push_back(td.states.col(i).cast<double>());

  inference::FrequencyOptions fast;
  fast.warmup = config.bench.warmup;
  fast.reps = config.bench.reps;
  fast.pin_thread = config.bench.pin;
  fast.batch_size = config.bench.batch_size;
  inference::FrequencyOptions slow = fast;
  slow.warmup = config.bench.teacher_warmup;
  slow.reps = config.bench.teacher_reps;
  slow.batch_size = 0;

  const auto dir = new_stage_dir(out, Stage::kBench);
  std::mt19937_64 rng(derive_seed(config.run.seed, kBenchStream));
  const auto save = [&](inference::FrequencyReport r, const std::string& id, int n) {
    r.policy = id;
    r.task = config.run.env;
    r.n_candidates = n;
    r.threads = config.bench.threads;
    inference::append_bench_csv(dir / kBenchFile, r);
    inference::write_report(dir / (id + ".txt"), r);
    log << "[bench] " << id << ": " << r.hz_single_stream << " Hz (p50 " << r.p50_us << " us)\n";
  };

  const int n_teacher = teacher.n_candidates_train;
  save(inference::measure_frequency(
           [&](const Vector<double>& s) {
             return planner::plan(teacher, s, n_teacher, rng).best_action();
           },
           probes, slow),
       kTeacherId, n_teacher);
  for (int n : config.inference.candidates) {
    const auto hi = inference::HiPolicy::from_model(model, n);
    save(inference::measure_frequency(
             [&](const Vector<double>& s) { return inference::hi_act(hi, s, rng).action; }, probes,
             fast,
             [&](const Matrix<double>& states) { return inference::hi_act_batch(hi, states, rng); }),
         hi_policy_id(n), n);
  }
  const auto hi1 = inference::HiPolicy::from_model(model, 1);
  save(inference::measure_frequency(
           [&](const Vector<double>& s) { return inference::hi_act_no_critic(hi1, s, rng); },
           probes, fast),
       kNoCriticId, 1);
  save(inference::measure_frequency(
           [&](const Vector<double>& s) { return distill_act(distill, s); }, probes, fast,
           [&](const Matrix<double>& states) {
             return nn::mlp_forward(distill, Matrix<float>(states.cast<float>()))
                 .cast<double>()
                 .cwiseMax(-1.0)
                 .cwiseMin(1.0)
                 .eval();
           }),
       kDistillId, 0);

  write_provenance(dir, config, {planner_path.parent_path(), habi_dir});
  mark_latest(out, Stage::kBench, dir);
  log << "[bench] -> " << dir.string() << "\n";
  return dir;
}

fs::path run_report(const RunConfig& config, const fs::path& out, std::ostream& log) {
  const auto report = assemble_report(out, config.inference.candidates);
  const auto dir = new_stage_dir(out, Stage::kReport);
  write_text(dir / "report.csv", report_csv(report));
  const auto text = report_text(report);
  write_text(dir / "report.txt", text);
  std::vector<fs::path> inputs;
  if (!report.eval_dir.empty()) inputs.emplace_back(report.eval_dir);
  if (!report.bench_dir.empty()) inputs.emplace_back(report.bench_dir);
  write_provenance(dir, config, inputs);
  mark_latest(out, Stage::kReport, dir);
  log << text << "[report] -> " << dir.string() << "\n";
  return dir;
}

fs::path run_all(const RunConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  run_gen_data(config, out, log);
  run_train_planner(config, out, log);
  run_habitize(config, out, log);
  run_eval(config, out, log);
  run_bench(config, out, log);
  return run_report(config, out, log);
}

}  // namespace habi::pipeline
