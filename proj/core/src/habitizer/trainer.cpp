#include "habi/habitizer/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "habi/errors.hpp"
#include "habi/nn/checkpoint.hpp"
#include "habi/rng.hpp"

namespace habi::habitizer {

StepBatch sample_step_batch(const TeacherDataset& data, int batch, int critic_batch,
                            int latent_dim, std::mt19937_64& rng) {
  if (data.size() == 0) throw UsageError("habitization batch: empty teacher dataset");
  if (batch < 1 || critic_batch < 0 || critic_batch > batch || latent_dim < 1) {
    throw ConfigError("habitization batch: need batch >= 1 and 0 <= critic_batch <= batch");
  }
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const Index n = data.n_candidates;
  StepBatch out;
  out.states.resize(data.state_dim, batch);
  out.best_actions.resize(data.action_dim, batch);
  out.noise.resize(latent_dim, batch);
  out.candidates.resize(data.action_dim, critic_batch * n);
  out.q.resize(n, critic_batch);
  for (Index j = 0; j < batch; ++j) {
    const auto i = static_cast<Index>(pick(rng));
    out.states.col(j) = data.states.col(i);
    out.best_actions.col(j) = data.best_actions.col(i);
    if (j < critic_batch) {
      out.candidates.middleCols(j * n, n) = data.candidates.middleCols(i * n, n);
      out.q.col(j) = data.q.col(i);
    }
  }
  for (Index j = 0; j < batch; ++j) {
    for (Index k = 0; k < latent_dim; ++k) out.noise(k, j) = normal(rng);
  }
  return out;
}

LossReport habitize_step(HabiModel<float>& model, TrainingState& state, const StepBatch& batch,
                         double lr, ErrorNorm norm) {
  LossReport r;
  r.beta = model.kl_ctrl.beta();
  PolicyGrads<float> pg;
  const auto terms = policy_loss(model, batch.states, batch.best_actions, batch.noise, r.beta, norm, &pg);
  if (!std::isfinite(terms.recon)) throw TrainingError("recon", "non-finite reconstruction loss");
  if (!std::isfinite(terms.kl)) throw TrainingError("kl", "non-finite KL term");
  nn::MlpParams<float> cg;
  const Index cb = batch.q.cols();
  if (cb > 0) {
    r.critic = critic_batch_loss(model, Matrix<float>(batch.states.leftCols(cb)),
                                 Matrix<float>(batch.best_actions.leftCols(cb)),
                                 Matrix<float>(batch.noise.leftCols(cb)), batch.candidates, batch.q,
                                 norm, &cg);
    if (!std::isfinite(r.critic)) throw TrainingError("critic", "non-finite critic loss");
  }
  // Check everything before touching any parameter so a failed step leaves the model intact.
  auto finite = [](const latent::GaussianHead<float>& h) { return h.mu.all_finite() && h.xi.all_finite(); };
  if (!finite(pg.prior)) throw TrainingError("prior", "non-finite gradient");
  if (!finite(pg.posterior)) throw TrainingError("posterior", "non-finite gradient");
  if (!pg.decoder.all_finite()) throw TrainingError("decoder", "non-finite gradient");
  if (cb > 0 && !cg.all_finite()) throw TrainingError("critic", "non-finite gradient");

  nn::adam_update(model.prior.mu, pg.prior.mu, state.prior_mu, lr, "prior");
  nn::adam_update(model.prior.xi, pg.prior.xi, state.prior_xi, lr, "prior");
  nn::adam_update(model.posterior.mu, pg.posterior.mu, state.post_mu, lr, "posterior");
  nn::adam_update(model.posterior.xi, pg.posterior.xi, state.post_xi, lr, "posterior");
  nn::adam_update(model.decoder, pg.decoder, state.decoder, lr, "decoder");
  if (cb > 0) nn::adam_update(model.critic, cg, state.critic, lr, "critic");

  r.recon = terms.recon;
  r.kl = terms.kl;
  r.total = terms.total;
  r.kl_smoothed = model.kl_avg.push(terms.kl);
  model.kl_ctrl.update(r.kl_smoothed);
  ++state.step;
  return r;
}

namespace {

constexpr const char* kMetricsHeader = "step,recon,kl,kl_smooth,beta,critic";

void validate_config(const TrainConfig& c) {
  if (c.steps < 1) throw ConfigError("habitize: steps must be >= 1");
  if (c.batch < 1) throw ConfigError("habitize: batch must be >= 1");
  if (c.critic_batch < 0 || c.critic_batch > c.batch) {
    throw ConfigError("habitize: critic_batch must lie in [0, batch]");
  }
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw ConfigError("habitize: lr must be positive");
  if (c.log_every < 1 || c.checkpoint_every < 1) {
    throw ConfigError("habitize: log_every and checkpoint_every must be >= 1");
  }
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  return dir / ("step_" + std::to_string(step) + ".bin");
}

// Largest n with a checkpoints/step_<n>.bin file, or 0.
std::uint64_t newest_checkpoint(const std::filesystem::path& dir) {
  std::uint64_t best = 0;
  if (!std::filesystem::is_directory(dir)) return 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (!name.starts_with("step_") || !name.ends_with(".bin")) continue;
    std::uint64_t n = 0;
    const char* first = name.data() + 5;
    const char* last = name.data() + name.size() - 4;
    auto [p, ec] = std::from_chars(first, last, n);
    if (ec == std::errc() && p == last) best = std::max(best, n);
  }
  return best;
}

// Drop metric rows logged after `step` so a resumed run appends cleanly.
void truncate_metrics(const std::filesystem::path& path, std::uint64_t step) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot read metrics for resume");
  std::ostringstream kept;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      if (line != kMetricsHeader) throw FormatError(path.string() + ": unexpected metrics header");
      kept << line << '\n';
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::uint64_t s = 0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), s);
    if (ec != std::errc() || p == line.data() + line.size() || *p != ',') {
      throw FormatError(path.string() + ": malformed metrics row '" + line + "'");
    }
    if (s <= step) kept << line << '\n';
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << kept.str();
}

}  // namespace

HabiModel<float> run_habitization(const TeacherDataset& data, const ModelConfig& model_config,
                                  const TrainConfig& config, const std::filesystem::path& run_dir,
                                  bool resume, const StepLogFn& log) {
  validate_config(config);
  if (data.size() == 0) throw UsageError("habitize: empty teacher dataset");
  data.validate();
  const auto ckpt_dir = run_dir / "checkpoints";
  const auto metrics_path = run_dir / "metrics.csv";
  std::filesystem::create_directories(ckpt_dir);

  HabiModel<float> model;
  TrainingState state;
  const std::uint64_t start = resume ? newest_checkpoint(ckpt_dir) : 0;
  if (start > 0) {
    model = load_model(checkpoint_path(ckpt_dir, start), &state);
    if (state.step != start) {
      throw FormatError(checkpoint_path(ckpt_dir, start).string() + ": step counter disagrees with file name");
    }
    if (model.state_dim != data.state_dim || model.action_dim != data.action_dim ||
        model.latent_dim() != model_config.latent_dim) {
      throw ConfigError("habitize: checkpoint shape does not match the teacher dataset or config");
    }
    truncate_metrics(metrics_path, start);
  } else {
    std::mt19937_64 init(derive_seed(config.seed, 0x30de));
    model = make_habi_model<float>(data.state_dim, data.action_dim, model_config, init);
    state = TrainingState::for_model(model);
    std::ofstream out(metrics_path, std::ios::trunc);
    out << kMetricsHeader << '\n';
  }

  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw UsageError("habitize: cannot write " + metrics_path.string());
  metrics.precision(9);
  const auto total = static_cast<std::uint64_t>(config.steps);
  while (state.step < total) {
    std::mt19937_64 rng(derive_seed(config.seed, 0x4ab1, state.step));
    const auto batch = sample_step_batch(data, config.batch, config.critic_batch,
                                         model_config.latent_dim, rng);
    const auto r = habitize_step(model, state, batch, config.lr, config.norm);
    const auto k = state.step;
    if (k % static_cast<std::uint64_t>(config.log_every) == 0 || k == total) {
      metrics << k << ',' << r.recon << ',' << r.kl << ',' << r.kl_smoothed << ',' << r.beta << ','
              << r.critic << '\n';
      metrics.flush();
      if (log) log(k, r);
    }
    if (k % static_cast<std::uint64_t>(config.checkpoint_every) == 0) {
      save_model(checkpoint_path(ckpt_dir, k), model, &state);
    }
  }
  save_model(run_dir / "model.bin", model);
  return model;
}

nn::MlpParams<float> make_distill_net(int state_dim, int action_dim, const std::vector<int>& hidden,
                                      std::mt19937_64& rng) {
  std::vector<int> sizes{state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim);
  return nn::make_mlp<float>(sizes, rng, nn::Activation::kTanh);
}

template <class Real>
double distill_loss(const nn::MlpParams<Real>& net, const Matrix<Real>& states,
                    const Matrix<Real>& targets, ErrorNorm norm, nn::MlpParams<Real>* grads) {
  if (states.cols() == 0) throw UsageError("distill loss: empty batch");
  nn::Tape<Real> tape;
  auto pred = nn::mlp_forward(net, tape, tape.constant(states), grads);
  auto loss = recon_taped(tape, pred, targets, norm);
  if (grads != nullptr) tape.backward(loss);
  return static_cast<double>(tape.scalar(loss));
}

template double distill_loss(const nn::MlpParams<float>&, const Matrix<float>&,
                             const Matrix<float>&, ErrorNorm, nn::MlpParams<float>*);
template double distill_loss(const nn::MlpParams<double>&, const Matrix<double>&,
                             const Matrix<double>&, ErrorNorm, nn::MlpParams<double>*);

void train_direct_distill(nn::MlpParams<float>& net, const Matrix<float>& states,
                          const Matrix<float>& targets, const DistillConfig& config,
                          const std::function<void(int, double)>& log) {
  if (states.cols() == 0) throw UsageError("direct distill: empty dataset");
  if (targets.cols() != states.cols() || states.rows() != net.input_dim() ||
      targets.rows() != net.output_dim()) {
    throw ConfigError("direct distill: data shapes do not match the network");
  }
  if (config.batch < 1 || config.steps < 0 || !(config.lr > 0.0) || config.log_every < 1) {
    throw ConfigError("direct distill: need batch >= 1, steps >= 0, lr > 0, log_every >= 1");
  }
  auto adam = nn::AdamState<float>::for_network(net);
  Matrix<float> s(states.rows(), config.batch), t(targets.rows(), config.batch);
  for (int k = 0; k < config.steps; ++k) {
    std::mt19937_64 rng(derive_seed(config.seed, 0xd157, static_cast<std::uint64_t>(k)));
    std::uniform_int_distribution<Index> pick(0, states.cols() - 1);
    for (Index j = 0; j < config.batch; ++j) {
      const Index i = pick(rng);
      s.col(j) = states.col(i);
      t.col(j) = targets.col(i);
    }
    nn::MlpParams<float> grads;
    const double loss = distill_loss(net, s, t, config.norm, &grads);
    if (!std::isfinite(loss)) throw TrainingError("distill", "non-finite regression loss");
    nn::adam_update(net, grads, adam, config.lr, "distill");
    if (log && ((k + 1) % config.log_every == 0 || k + 1 == config.steps)) log(k + 1, loss);
  }
}

void save_distill_net(const std::filesystem::path& path, const nn::MlpParams<float>& net) {
  nn::Container c;
  c.put_text("kind", "habi-distill");
  c.put_mlp("net", net);
  c.save(path);
}

nn::MlpParams<float> load_distill_net(const std::filesystem::path& path) {
  const auto c = nn::Container::load(path);
  if (!c.has("kind") || c.text("kind") != "habi-distill") {
    throw FormatError(path.string() + ": not a distillation network");
  }
  auto net = c.mlp("net");
  net.validate();
  return net;
}

}  // namespace habi::habitizer
