#include "habi/habitizer/model.hpp"

#include <type_traits>

#include "habi/errors.hpp"
#include "habi/nn/checkpoint.hpp"

namespace habi::habitizer {

template <class Real>
void HabiModel<Real>::validate() const {
  prior.validate();
  posterior.validate();
  decoder.validate();
  critic.validate();
  kl_ctrl.validate();
  const auto dz = decoder.input_dim();
  auto fail = [](const std::string& why) { throw ConfigError("habi model: " + why); };
  if (prior.input_dim() != state_dim) fail("prior encoder input != state_dim");
  if (posterior.input_dim() != state_dim + action_dim) {
    fail("posterior encoder input != state_dim + action_dim");
  }
  if (prior.latent_dim() != dz || posterior.latent_dim() != dz) {
    fail("encoder latent size differs from decoder input size");
  }
  if (decoder.output_dim() != action_dim) fail("decoder output != action_dim");
  if (critic.input_dim() != dz + action_dim) fail("critic input != latent_dim + action_dim");
  if (critic.output_dim() != 1) fail("critic output must be a scalar");
}

template <class Real>
HabiModel<Real> make_habi_model(int state_dim, int action_dim, const ModelConfig& config,
                                std::mt19937_64& rng) {
  if (state_dim < 1 || action_dim < 1 || config.latent_dim < 1) {
    throw ConfigError("habi model: dimensions must be positive");
  }
  HabiModel<Real> m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.prior = latent::make_head<Real>(state_dim, config.hidden, config.latent_dim, rng);
  m.posterior = latent::make_head<Real>(state_dim + action_dim, config.hidden, config.latent_dim, rng);
  std::vector<int> dsizes{config.latent_dim};
  dsizes.insert(dsizes.end(), config.hidden.begin(), config.hidden.end());
  dsizes.push_back(action_dim);
  m.decoder = nn::make_mlp<Real>(dsizes, rng, nn::Activation::kTanh);
  std::vector<int> csizes{config.latent_dim + action_dim};
  csizes.insert(csizes.end(), config.critic_hidden.begin(), config.critic_hidden.end());
  csizes.push_back(1);
  m.critic = nn::make_mlp<Real>(csizes, rng);
  m.kl_ctrl.target_kl = config.target_kl;
  m.kl_ctrl.lr_beta = config.lr_beta;
  m.kl_ctrl.log_beta = config.log_beta_init;
  m.validate();
  return m;
}

TrainingState TrainingState::for_model(const HabiModel<float>& model) {
  using A = nn::AdamState<float>;
  TrainingState s;
  s.prior_mu = A::for_network(model.prior.mu);
  s.prior_xi = A::for_network(model.prior.xi);
  s.post_mu = A::for_network(model.posterior.mu);
  s.post_xi = A::for_network(model.posterior.xi);
  s.decoder = A::for_network(model.decoder);
  s.critic = A::for_network(model.critic);
  return s;
}

namespace {

template <class State>
struct NamedAdam {
  const char* name;
  std::conditional_t<std::is_const_v<State>, const nn::AdamState<float>, nn::AdamState<float>>* adam;
};

template <class State>
std::vector<NamedAdam<State>> adam_slots(State& s) {
  return {{"prior.mu", &s.prior_mu}, {"prior.xi", &s.prior_xi}, {"posterior.mu", &s.post_mu},
          {"posterior.xi", &s.post_xi}, {"decoder", &s.decoder},  {"critic", &s.critic}};
}

}  // namespace

void save_model(const std::filesystem::path& path, const HabiModel<float>& model,
                const TrainingState* state) {
  model.validate();
  nn::Container c;
  c.put_text("kind", "habi-model");
  c.put_u64("shape", {static_cast<std::uint64_t>(model.state_dim),
                      static_cast<std::uint64_t>(model.action_dim)});
  c.put_mlp("prior.mu", model.prior.mu);
  c.put_mlp("prior.xi", model.prior.xi);
  c.put_mlp("posterior.mu", model.posterior.mu);
  c.put_mlp("posterior.xi", model.posterior.xi);
  c.put_mlp("decoder", model.decoder);
  c.put_mlp("critic", model.critic);
  const auto& k = model.kl_ctrl;
  c.put_f64("kl_ctrl", {k.log_beta, k.target_kl, k.lr_beta, k.log_beta_min, k.log_beta_max});
  c.put_f64("kl_avg", {model.kl_avg.decay, model.kl_avg.value, model.kl_avg.initialized ? 1.0 : 0.0});
  if (state != nullptr) {
    c.put_u64("train.step", {state->step});
    for (const auto& slot : adam_slots(*state)) {
      const std::string base = std::string("adam.") + slot.name;
      c.put_mlp(base + ".m", slot.adam->m);
      c.put_mlp(base + ".v", slot.adam->v);
      c.put_u64(base + ".count", {slot.adam->step_count});
    }
  }
  c.save(path);
}

HabiModel<float> load_model(const std::filesystem::path& path, TrainingState* state) {
  const auto c = nn::Container::load(path);
  auto bad = [&](const std::string& why) { return FormatError(path.string() + ": " + why); };
  if (c.text("kind") != "habi-model") throw bad("not a habi model checkpoint");
  const auto shape = c.u64("shape");
  if (shape.size() != 2) throw bad("bad shape section");
  HabiModel<float> m;
  m.state_dim = static_cast<int>(shape[0]);
  m.action_dim = static_cast<int>(shape[1]);
  m.prior = {c.mlp("prior.mu"), c.mlp("prior.xi")};
  m.posterior = {c.mlp("posterior.mu"), c.mlp("posterior.xi")};
  m.decoder = c.mlp("decoder");
  m.critic = c.mlp("critic");
  const auto k = c.f64("kl_ctrl");
  const auto avg = c.f64("kl_avg");
  if (k.size() != 5 || avg.size() != 3) throw bad("bad controller section");
  m.kl_ctrl = {k[0], k[1], k[2], k[3], k[4]};
  m.kl_avg = {avg[0], avg[1], avg[2] != 0.0};
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw bad(e.what());
  }
  if (state != nullptr) {
    if (!c.has("train.step")) throw bad("checkpoint has no training state");
    *state = TrainingState::for_model(m);
    state->step = c.u64("train.step").at(0);
    for (const auto& slot : adam_slots(*state)) {
      const std::string base = std::string("adam.") + slot.name;
      const auto& mm = c.mlp(base + ".m");
      const auto& vv = c.mlp(base + ".v");
      if (!(mm.zeros_like() == slot.adam->m) || !(vv.zeros_like() == slot.adam->v)) {
        throw bad("optimizer state shape mismatch for " + std::string(slot.name));
      }
      slot.adam->m = mm;
      slot.adam->v = vv;
      slot.adam->step_count = c.u64(base + ".count").at(0);
    }
  }
  return m;
}

template struct HabiModel<float>;
template struct HabiModel<double>;
template HabiModel<float> make_habi_model<float>(int, int, const ModelConfig&, std::mt19937_64&);
template HabiModel<double> make_habi_model<double>(int, int, const ModelConfig&, std::mt19937_64&);

}  // namespace habi::habitizer
