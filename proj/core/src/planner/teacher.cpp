#include "habi/planner/teacher.hpp"

#include <cmath>

#include "habi/errors.hpp"
#include "habi/nn/checkpoint.hpp"
#include "habi/rng.hpp"
#include "habi/select.hpp"

namespace habi::planner {

double NoiseSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("noise schedule: T must be >= 1");
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int k = 0; k < T; ++k) {
    betas[static_cast<std::size_t>(k)] =
        T == 1 ? beta_start : beta_start + (beta_end - beta_start) * k / (T - 1);
  }
  return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("noise schedule: need at least one step");
  NoiseSchedule s;
  double prod = 1.0;
  for (std::size_t k = 0; k < betas.size(); ++k) {
    const double b = betas[k];
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("noise schedule: betas must lie in (0, 1)");
    if (k > 0 && b < betas[k - 1]) throw ConfigError("noise schedule: betas must not decrease");
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  s.betas = std::move(betas);
  return s;
}

Vector<double> timestep_embedding(int t) {
  constexpr int half = kTimeEmbedDim / 2;
  Vector<double> e(kTimeEmbedDim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1000.0) * i / half);
    e(2 * i) = std::sin(t * freq);
    e(2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

void TeacherPlanner::validate() const {
  if (state_dim < 1 || action_dim < 1 || horizon < 1 || n_candidates_train < 1) {
    throw ConfigError("teacher planner: dimensions must be positive");
  }
  if (schedule.betas.empty()) throw ConfigError("teacher planner: empty noise schedule");
  denoiser.validate();
  value_net.validate();
  if (denoiser.input_dim() != state_dim + sequence_dim() + kTimeEmbedDim ||
      denoiser.output_dim() != sequence_dim()) {
    throw ConfigError("teacher planner: denoiser shape does not match state/action/horizon");
  }
  if (value_net.input_dim() != state_dim + action_dim || value_net.output_dim() != 1) {
    throw ConfigError("teacher planner: value net shape does not match state/action");
  }
}

void TeacherPlanner::save(const std::filesystem::path& path) const {
  validate();
  nn::Container c;
  c.put_text("kind", "teacher-planner");
  c.put_u64("shape", {static_cast<std::uint64_t>(state_dim), static_cast<std::uint64_t>(action_dim),
                      static_cast<std::uint64_t>(horizon),
                      static_cast<std::uint64_t>(n_candidates_train)});
  c.put_f64("schedule", schedule.betas);
  c.put_mlp("denoiser", denoiser);
  c.put_mlp("value", value_net);
  c.save(path);
}

TeacherPlanner TeacherPlanner::load(const std::filesystem::path& path) {
  const auto c = nn::Container::load(path);
  if (c.text("kind") != "teacher-planner") {
    throw FormatError(path.string() + ": not a teacher planner checkpoint");
  }
  const auto shape = c.u64("shape");
  if (shape.size() != 4) throw FormatError(path.string() + ": bad shape section");
  TeacherPlanner p;
  p.state_dim = static_cast<int>(shape[0]);
  p.action_dim = static_cast<int>(shape[1]);
  p.horizon = static_cast<int>(shape[2]);
  p.n_candidates_train = static_cast<int>(shape[3]);
  p.schedule = NoiseSchedule::from_betas(c.f64("schedule"));
  p.denoiser = c.mlp("denoiser");
  p.value_net = c.mlp("value");
  p.validate();
  return p;
}

TeacherPlanner make_planner(int state_dim, int action_dim, const PlannerConfig& config,
                            std::mt19937_64& rng) {
  if (config.horizon < 1) throw ConfigError("planner: horizon must be >= 1");
  TeacherPlanner p;
  p.state_dim = state_dim;
  p.action_dim = action_dim;
  p.horizon = config.horizon;
  p.n_candidates_train = config.n_candidates_train;
  p.schedule = NoiseSchedule::linear(config.diffusion_steps, config.beta_start, config.beta_end);
  std::vector<int> dsizes{state_dim + p.sequence_dim() + kTimeEmbedDim};
  dsizes.insert(dsizes.end(), config.denoiser_hidden.begin(), config.denoiser_hidden.end());
  dsizes.push_back(p.sequence_dim());
  p.denoiser = nn::make_mlp<float>(dsizes, rng);
  std::vector<int> vsizes{state_dim + action_dim};
  vsizes.insert(vsizes.end(), config.value_hidden.begin(), config.value_hidden.end());
  vsizes.push_back(1);
  p.value_net = nn::make_mlp<float>(vsizes, rng);
  p.validate();
  return p;
}

template <class Real>
Matrix<Real> ddpm_inputs(const NoiseSchedule& schedule, const Matrix<Real>& states,
                         const Matrix<Real>& x0, const Matrix<Real>& noise,
                         const std::vector<int>& t) {
  const Index b = states.cols();
  if (x0.cols() != b || noise.cols() != b || static_cast<Index>(t.size()) != b ||
      noise.rows() != x0.rows()) {
    throw ConfigError("ddpm_inputs: batch shapes disagree");
  }
  const Index sd = states.rows(), xd = x0.rows();
  Matrix<Real> in(sd + xd + kTimeEmbedDim, b);
  for (Index j = 0; j < b; ++j) {
    const int tj = t[static_cast<std::size_t>(j)];
    if (tj < 1 || tj > schedule.steps()) throw ConfigError("ddpm_inputs: timestep out of range");
    const double ab = schedule.alpha_bar(tj);
    in.col(j).head(sd) = states.col(j);
    in.col(j).segment(sd, xd) = (static_cast<Real>(std::sqrt(ab)) * x0.col(j) +
                                 static_cast<Real>(std::sqrt(1.0 - ab)) * noise.col(j));
    in.col(j).tail(kTimeEmbedDim) = timestep_embedding(tj).cast<Real>();
  }
  return in;
}

template <class Real>
double ddpm_loss(const nn::MlpParams<Real>& denoiser, const Matrix<Real>& inputs,
                 const Matrix<Real>& noise, nn::MlpParams<Real>* grads) {
  if (noise.rows() != denoiser.output_dim() || noise.cols() != inputs.cols()) {
    throw ConfigError("ddpm_loss: noise shape does not match denoiser output");
  }
  nn::Tape<Real> tape;
  auto x = tape.constant(inputs);
  auto pred = nn::mlp_forward(denoiser, tape, x, grads);
  auto loss = tape.mean(tape.square(tape.sub(pred, tape.constant(noise))));
  if (grads != nullptr) tape.backward(loss);
  return static_cast<double>(tape.scalar(loss));
}

template <class Real>
double value_loss(const nn::MlpParams<Real>& value_net, const Matrix<Real>& states,
                  const Matrix<Real>& actions, const Vector<Real>& targets,
                  nn::MlpParams<Real>* grads) {
  if (states.cols() == 0) throw UsageError("value_loss: empty batch");
  if (actions.cols() != states.cols() || targets.size() != states.cols()) {
    throw ConfigError("value_loss: batch shapes disagree");
  }
  nn::Tape<Real> tape;
  auto x = tape.vcat(tape.constant(states), tape.constant(actions));
  auto q = nn::mlp_forward(value_net, tape, x, grads);
  auto loss = tape.mean(tape.square(tape.sub(q, tape.constant(targets.transpose()))));
  if (grads != nullptr) tape.backward(loss);
  return static_cast<double>(tape.scalar(loss));
}

DdpmBatch sample_ddpm_batch(const envs::OfflineDataset& data, int horizon,
                            const NoiseSchedule& schedule, int batch, std::mt19937_64& rng) {
  if (data.size() == 0) throw UsageError("ddpm batch: empty dataset");
  if (batch < 1) throw ConfigError("ddpm batch: batch must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> step(1, schedule.steps());
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index ad = data.actions.rows() * horizon;
  DdpmBatch out;
  out.states.resize(data.states.rows(), batch);
  out.x0.resize(ad, batch);
  out.noise.resize(ad, batch);
  out.t.resize(static_cast<std::size_t>(batch));
  for (int j = 0; j < batch; ++j) {
    const std::size_t i = pick(rng);
    out.states.col(j) = data.states.col(static_cast<Index>(i)).cast<float>();
    out.x0.col(j) = data.action_window(i, horizon).cast<float>();
    out.t[static_cast<std::size_t>(j)] = step(rng);
    for (Index k = 0; k < ad; ++k) out.noise(k, j) = static_cast<float>(normal(rng));
  }
  return out;
}

double ddpm_train_step(TeacherPlanner& planner, nn::AdamState<float>& adam, const DdpmBatch& batch,
                       double lr) {
  const auto inputs = ddpm_inputs(planner.schedule, batch.states, batch.x0, batch.noise, batch.t);
  nn::MlpParams<float> grads;
  const double loss = ddpm_loss(planner.denoiser, inputs, batch.noise, &grads);
  if (!std::isfinite(loss)) throw TrainingError("denoiser", "non-finite noise-prediction loss");
  nn::adam_update(planner.denoiser, grads, adam, lr, "denoiser");
  return loss;
}

void train_denoiser(TeacherPlanner& planner, const envs::OfflineDataset& data,
                    const PlannerTrainOptions& options, const PlannerLogFn& log) {
  if (data.size() == 0) throw UsageError("train_denoiser: empty dataset");
  if (data.states.rows() != planner.state_dim || data.actions.rows() != planner.action_dim) {
    throw ConfigError("train_denoiser: dataset dimensions do not match the planner");
  }
  auto adam = nn::AdamState<float>::for_network(planner.denoiser);
  for (int k = 0; k < options.denoiser_steps; ++k) {
    std::mt19937_64 rng(derive_seed(options.seed, 0xd1ff, static_cast<std::uint64_t>(k)));
    const auto batch = sample_ddpm_batch(data, planner.horizon, planner.schedule, options.batch, rng);
    const double loss = ddpm_train_step(planner, adam, batch, options.lr);
    if (log && (k % options.log_every == 0 || k + 1 == options.denoiser_steps)) {
      log("denoiser", k, loss);
    }
  }
}

void train_value(TeacherPlanner& planner, const envs::OfflineDataset& data,
                 const PlannerTrainOptions& options, const PlannerLogFn& log) {
  if (data.size() == 0) throw UsageError("train_value: empty dataset");
  if (data.states.rows() != planner.state_dim || data.actions.rows() != planner.action_dim) {
    throw ConfigError("train_value: dataset dimensions do not match the planner");
  }
  auto adam = nn::AdamState<float>::for_network(planner.value_net);
  const auto b = static_cast<Index>(options.batch);
  Matrix<float> s(data.states.rows(), b), a(data.actions.rows(), b);
  Vector<float> y(b);
  for (int k = 0; k < options.value_steps; ++k) {
    std::mt19937_64 rng(derive_seed(options.seed, 0x7a1e, static_cast<std::uint64_t>(k)));
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (Index j = 0; j < b; ++j) {
      const auto i = static_cast<Index>(pick(rng));
      s.col(j) = data.states.col(i).cast<float>();
      a.col(j) = data.actions.col(i).cast<float>();
      y(j) = static_cast<float>(data.returns_to_go[static_cast<std::size_t>(i)]);
    }
    nn::MlpParams<float> grads;
    const double loss = value_loss(planner.value_net, s, a, y, &grads);
    if (!std::isfinite(loss)) throw TrainingError("value", "non-finite regression loss");
    nn::adam_update(planner.value_net, grads, adam, options.lr, "value");
    if (log && (k % options.log_every == 0 || k + 1 == options.value_steps)) log("value", k, loss);
  }
}

Matrix<float> ddpm_sample(const TeacherPlanner& planner, const Vector<double>& state, int n,
                          std::mt19937_64& rng) {
  if (n < 1) throw UsageError("ddpm_sample: n must be >= 1");
  if (state.size() != planner.state_dim) throw ConfigError("ddpm_sample: state dimension mismatch");
  const int sd = planner.state_dim, xd = planner.sequence_dim();
  Matrix<float> x(xd, n), noise(xd, n);
  fill_standard_normal(x.data(), static_cast<std::size_t>(x.size()), rng);
  Matrix<float> in(sd + xd + kTimeEmbedDim, n);
  in.topRows(sd) = state.cast<float>().replicate(1, n);
  const auto& sch = planner.schedule;
  for (int t = sch.steps(); t >= 1; --t) {
    in.middleRows(sd, xd) = x;
    in.bottomRows(kTimeEmbedDim) = timestep_embedding(t).cast<float>().replicate(1, n);
    const Matrix<float> eps = nn::mlp_forward(planner.denoiser, in);
    const double ab = sch.alpha_bar(t), ab_prev = sch.alpha_bar(t - 1), b = sch.beta(t);
    const auto x0 = ((x - static_cast<float>(std::sqrt(1.0 - ab)) * eps) /
                     static_cast<float>(std::sqrt(ab)))
                        .cwiseMax(-1.0f)
                        .cwiseMin(1.0f)
                        .eval();
    const auto c0 = static_cast<float>(std::sqrt(ab_prev) * b / (1.0 - ab));
    const auto ct = static_cast<float>(std::sqrt(1.0 - b) * (1.0 - ab_prev) / (1.0 - ab));
    x = c0 * x0 + ct * x;
    if (t > 1) {
      const auto sd_post = static_cast<float>(std::sqrt(sch.posterior_variance(t)));
      fill_standard_normal(noise.data(), static_cast<std::size_t>(noise.size()), rng);
      x += sd_post * noise;
    }
  }
  return x.cwiseMax(-1.0f).cwiseMin(1.0f);
}

PlanResult score_candidates(const TeacherPlanner& planner, const Vector<double>& state,
                            Matrix<double> candidates) {
  const Index n = candidates.cols();
  if (n < 1) throw UsageError("plan: need at least one candidate");
  Matrix<float> in(planner.state_dim + planner.action_dim, n);
  in.topRows(planner.state_dim) = state.cast<float>().replicate(1, n);
  in.bottomRows(planner.action_dim) = candidates.cast<float>();
  PlanResult out;
  out.q = nn::mlp_forward(planner.value_net, in).row(0).transpose().cast<double>();
  out.candidates = std::move(candidates);
  out.best = argmax_lowest(out.q);
  return out;
}

PlanResult plan(const TeacherPlanner& planner, const Vector<double>& state, int n,
                std::mt19937_64& rng) {
  const auto seqs = ddpm_sample(planner, state, n, rng);
  return score_candidates(planner, state, seqs.topRows(planner.action_dim).cast<double>());
}

template Matrix<float> ddpm_inputs(const NoiseSchedule&, const Matrix<float>&, const Matrix<float>&,
                                   const Matrix<float>&, const std::vector<int>&);
template Matrix<double> ddpm_inputs(const NoiseSchedule&, const Matrix<double>&,
                                    const Matrix<double>&, const Matrix<double>&,
                                    const std::vector<int>&);
template double ddpm_loss(const nn::MlpParams<float>&, const Matrix<float>&, const Matrix<float>&,
                          nn::MlpParams<float>*);
template double ddpm_loss(const nn::MlpParams<double>&, const Matrix<double>&,
                          const Matrix<double>&, nn::MlpParams<double>*);
template double value_loss(const nn::MlpParams<float>&, const Matrix<float>&, const Matrix<float>&,
                           const Vector<float>&, nn::MlpParams<float>*);
template double value_loss(const nn::MlpParams<double>&, const Matrix<double>&,
                           const Matrix<double>&, const Vector<double>&, nn::MlpParams<double>*);

}  // namespace habi::planner
