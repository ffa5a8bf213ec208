#include "habi/inference/hi_policy.hpp"

#include <algorithm>

#include "habi/errors.hpp"
#include "habi/rng.hpp"
#include "habi/select.hpp"

namespace habi::inference {

HiPolicy HiPolicy::from_model(const habitizer::HabiModel<float>& model, int n_candidates) {
  HiPolicy p;
  p.state_dim = model.state_dim;
  p.action_dim = model.action_dim;
  p.prior = model.prior;
  p.decoder = model.decoder;
  p.critic = model.critic;
  p.n_candidates = n_candidates;
  p.validate();
  return p;
}

void HiPolicy::validate() const {
  prior.validate();
  decoder.validate();
  critic.validate();
  if (n_candidates < 1) throw ConfigError("hi policy: n_candidates must be >= 1");
  if (prior.input_dim() != state_dim || prior.latent_dim() != decoder.input_dim() ||
      decoder.output_dim() != action_dim || critic.input_dim() != decoder.input_dim() + action_dim ||
      critic.output_dim() != 1) {
    throw ConfigError("hi policy: networks do not fit together");
  }
  if (!(action_low < action_high)) throw ConfigError("hi policy: empty action range");
}

namespace {

void bump(std::atomic<std::uint64_t>* c) {
  if (c != nullptr) c->fetch_add(1, std::memory_order_relaxed);
}

// dz x n latents drawn from the prior at `state`, column-major draw order.
Matrix<float> sample_latents(const HiPolicy& p, const Vector<double>& state, int n,
                             std::mt19937_64& rng) {
  if (state.size() != p.state_dim) throw ConfigError("hi policy: state dimension mismatch");
  bump(p.counters != nullptr ? &p.counters->prior : nullptr);
  const Vector<float> s = state.cast<float>();
  const Vector<float> mu = nn::mlp_forward(p.prior.mu, s);
  const Vector<float> sigma = latent::sigma_from_raw<float>(nn::mlp_forward(p.prior.xi, s));
  Matrix<float> z(mu.size(), n);
  fill_standard_normal(z.data(), static_cast<std::size_t>(z.size()), rng);
  z = (z.array().colwise() * sigma.array()).colwise() + mu.array();
  return z;
}

Matrix<float> decode(const HiPolicy& p, const Matrix<float>& z) {
  bump(p.counters != nullptr ? &p.counters->decoder : nullptr);
  return nn::mlp_forward(p.decoder, z);
}

Vector<float> score(const HiPolicy& p, const Matrix<float>& z, const Matrix<float>& a) {
  bump(p.counters != nullptr ? &p.counters->critic : nullptr);
  Matrix<float> in(z.rows() + a.rows(), z.cols());
  in << z, a;
  return nn::mlp_forward(p.critic, in).row(0).transpose();
}

}  // namespace

HiDecision hi_act(const HiPolicy& policy, const Vector<double>& state, std::mt19937_64& rng,
                  const Scorer* scorer) {
  const auto z = sample_latents(policy, state, policy.n_candidates, rng);
  const auto a = decode(policy, z);
  const Vector<float> s = scorer != nullptr ? (*scorer)(z, a) : score(policy, z, a);
  if (s.size() != a.cols()) throw ConfigError("hi_act: scorer returned the wrong number of scores");
  HiDecision d;
  d.chosen = argmax_lowest(s);
  d.scores = s.cast<double>();
  d.action = a.col(d.chosen).cast<double>().cwiseMax(policy.action_low).cwiseMin(policy.action_high);
  return d;
}

Vector<double> hi_act_no_critic(const HiPolicy& policy, const Vector<double>& state,
                                std::mt19937_64& rng) {
  const auto z = sample_latents(policy, state, 1, rng);
  return decode(policy, z).col(0).cast<double>().cwiseMax(policy.action_low).cwiseMin(policy.action_high);
}

Matrix<double> hi_act_batch(const HiPolicy& policy, const Matrix<double>& states,
                            std::mt19937_64& rng) {
  if (states.rows() != policy.state_dim) throw ConfigError("hi_act_batch: state dimension mismatch");
  const Index b = states.cols(), n = policy.n_candidates, dz = policy.latent_dim();
  bump(policy.counters != nullptr ? &policy.counters->prior : nullptr);
  const Matrix<float> s = states.cast<float>();
  const Matrix<float> mu = nn::mlp_forward(policy.prior.mu, s);
  Matrix<float> sigma = nn::mlp_forward(policy.prior.xi, s);
  sigma = sigma.unaryExpr([](float v) {
    return std::max(v, 0.0f) + std::log1p(std::exp(-std::abs(v))) + static_cast<float>(latent::kSigmaFloor);
  });
  Matrix<float> z(dz, b * n);
  fill_standard_normal(z.data(), static_cast<std::size_t>(z.size()), rng);
  for (Index i = 0; i < b; ++i) {
    auto zi = z.middleCols(i * n, n).array();
    zi = (zi.colwise() * sigma.col(i).array()).colwise() + mu.col(i).array();
  }
  const auto a = decode(policy, z);
  const auto q = score(policy, z, a);
  Matrix<double> out(policy.action_dim, b);
  for (Index i = 0; i < b; ++i) {
    const Index best = argmax_lowest(q.segment(i * n, n));
    out.col(i) = a.col(i * n + best).cast<double>().cwiseMax(policy.action_low).cwiseMin(policy.action_high);
  }
  return out;
}

}  // namespace habi::inference
