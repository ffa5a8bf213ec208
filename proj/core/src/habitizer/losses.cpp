#include "habi/habitizer/losses.hpp"

#include <cmath>

#include "habi/errors.hpp"

namespace habi::habitizer {

namespace {

// Per-column error norm of a residual matrix, 1 x B.
template <class Real>
typename nn::Tape<Real>::Var column_norm(nn::Tape<Real>& tape, typename nn::Tape<Real>::Var diff,
                                         ErrorNorm norm) {
  auto sq = tape.col_sum(tape.square(diff));
  if (norm == ErrorNorm::kSquared) return sq;
  return tape.sqrt(tape.add_scalar(sq, static_cast<Real>(kNormEps)));
}

template <class Real>
Matrix<Real> repeat_columns(const Matrix<Real>& x, Index n) {
  Matrix<Real> out(x.rows(), x.cols() * n);
  for (Index b = 0; b < x.cols(); ++b) out.middleCols(b * n, n) = x.col(b).replicate(1, n);
  return out;
}

template <class Real>
Matrix<Real> posterior_inputs(const Matrix<Real>& states, const Matrix<Real>& actions) {
  Matrix<Real> in(states.rows() + actions.rows(), states.cols());
  in << states, actions;
  return in;
}

template <class Real>
void check_batch(const HabiModel<Real>& model, const Matrix<Real>& states,
                 const Matrix<Real>& best_actions, const Matrix<Real>& noise, const char* who) {
  if (states.cols() == 0) throw UsageError(std::string(who) + ": empty batch");
  if (states.rows() != model.state_dim || best_actions.rows() != model.action_dim ||
      noise.rows() != model.latent_dim() || best_actions.cols() != states.cols() ||
      noise.cols() != states.cols()) {
    throw ConfigError(std::string(who) + ": batch shapes do not match the model");
  }
}

}  // namespace

template <class Real>
typename nn::Tape<Real>::Var recon_taped(nn::Tape<Real>& tape, typename nn::Tape<Real>::Var decoded,
                                         const Matrix<Real>& target, ErrorNorm norm) {
  const auto& d = tape.value(decoded);
  if (d.rows() != target.rows() || d.cols() != target.cols()) {
    throw ConfigError("recon loss: decoded actions and targets differ in shape");
  }
  return tape.mean(column_norm(tape, tape.sub(decoded, tape.constant(target)), norm));
}

template <class Real>
double recon_loss(const nn::MlpParams<Real>& decoder, const Vector<Real>& z_q,
                  const Vector<Real>& a_star, ErrorNorm norm) {
  nn::Tape<Real> tape;
  auto a = nn::mlp_forward(decoder, tape, tape.constant(z_q));
  return static_cast<double>(tape.scalar(recon_taped(tape, a, Matrix<Real>(a_star), norm)));
}

template <class Real>
typename nn::Tape<Real>::Var critic_taped(const nn::MlpParams<Real>& critic, nn::Tape<Real>& tape,
                                          typename nn::Tape<Real>::Var z_q,
                                          const Matrix<Real>& candidates, const Matrix<Real>& q,
                                          ErrorNorm norm,
                                          std::type_identity_t<nn::MlpParams<Real>>* grads) {
  const Index b = tape.value(z_q).cols();
  const Index n = q.rows();
  if (n == 0 || b == 0) throw UsageError("critic loss: no candidates");
  if (q.cols() != b || candidates.cols() != b * n ||
      candidates.rows() + tape.value(z_q).rows() != critic.input_dim()) {
    throw ConfigError("critic loss: candidate or Q shapes do not match the latent batch");
  }
  // The detached latent enters as a constant, so no gradient reaches the encoders.
  auto z = tape.constant(repeat_columns<Real>(tape.value(tape.detach(z_q)), n));
  auto pred = nn::mlp_forward(critic, tape, tape.vcat(z, tape.constant(candidates)), grads);
  Matrix<Real> target(1, b * n);
  for (Index j = 0; j < b; ++j) target.middleCols(j * n, n) = q.col(j).transpose();
  return tape.mean(column_norm(tape, tape.sub(pred, tape.constant(std::move(target))), norm));
}

template <class Real>
double critic_loss(const nn::MlpParams<Real>& critic, const Vector<Real>& z_q,
                   const Matrix<Real>& candidates, const Vector<Real>& q, ErrorNorm norm) {
  if (candidates.cols() == 0 || q.size() == 0) throw UsageError("critic loss: no candidates");
  nn::Tape<Real> tape;
  auto z = tape.constant(Matrix<Real>(z_q));
  return static_cast<double>(tape.scalar(critic_taped(critic, tape, z, candidates, Matrix<Real>(q), norm)));
}

template <class Real>
PolicyTerms policy_loss(const HabiModel<Real>& model, const Matrix<Real>& states,
                        const Matrix<Real>& best_actions, const Matrix<Real>& noise, double beta,
                        ErrorNorm norm, PolicyGrads<Real>* grads) {
  check_batch(model, states, best_actions, noise, "policy loss");
  nn::Tape<Real> tape;
  auto post = latent::encode_taped(model.posterior, tape,
                                   tape.constant(posterior_inputs(states, best_actions)),
                                   grads != nullptr ? &grads->posterior : nullptr);
  auto prior = latent::encode_taped(model.prior, tape, tape.constant(states),
                                    grads != nullptr ? &grads->prior : nullptr);
  auto z = latent::reparam_taped(tape, post, noise);
  auto decoded = nn::mlp_forward(model.decoder, tape, z, grads != nullptr ? &grads->decoder : nullptr);
  auto recon = recon_taped(tape, decoded, best_actions, norm);
  auto kl = tape.mean(latent::kl_taped(tape, post, prior));
  auto total = tape.add(recon, tape.scale(kl, static_cast<Real>(beta)));
  if (grads != nullptr) tape.backward(total);
  PolicyTerms out;
  out.recon = static_cast<double>(tape.scalar(recon));
  out.kl = static_cast<double>(tape.scalar(kl));
  out.total = static_cast<double>(tape.scalar(total));
  return out;
}

template <class Real>
double critic_batch_loss(const HabiModel<Real>& model, const Matrix<Real>& states,
                         const Matrix<Real>& best_actions, const Matrix<Real>& noise,
                         const Matrix<Real>& candidates, const Matrix<Real>& q, ErrorNorm norm,
                         nn::MlpParams<Real>* grads) {
  check_batch(model, states, best_actions, noise, "critic loss");
  nn::Tape<Real> tape;
  auto post = latent::encode_taped(model.posterior, tape,
                                   tape.constant(posterior_inputs(states, best_actions)));
  auto z = latent::reparam_taped(tape, post, noise);
  auto loss = critic_taped(model.critic, tape, z, candidates, q, norm, grads);
  if (grads != nullptr) tape.backward(loss);
  return static_cast<double>(tape.scalar(loss));
}

#define HABI_INSTANTIATE(Real)                                                                    \
  template nn::Tape<Real>::Var recon_taped(nn::Tape<Real>&, nn::Tape<Real>::Var,                  \
                                           const Matrix<Real>&, ErrorNorm);                       \
  template double recon_loss(const nn::MlpParams<Real>&, const Vector<Real>&, const Vector<Real>&, \
                             ErrorNorm);                                                          \
  template nn::Tape<Real>::Var critic_taped(const nn::MlpParams<Real>&, nn::Tape<Real>&,          \
                                            nn::Tape<Real>::Var, const Matrix<Real>&,             \
                                            const Matrix<Real>&, ErrorNorm, nn::MlpParams<Real>*); \
  template double critic_loss(const nn::MlpParams<Real>&, const Vector<Real>&,                    \
                              const Matrix<Real>&, const Vector<Real>&, ErrorNorm);               \
  template PolicyTerms policy_loss(const HabiModel<Real>&, const Matrix<Real>&,                   \
                                   const Matrix<Real>&, const Matrix<Real>&, double, ErrorNorm,   \
                                   PolicyGrads<Real>*);                                           \
  template double critic_batch_loss(const HabiModel<Real>&, const Matrix<Real>&,                  \
                                    const Matrix<Real>&, const Matrix<Real>&,                     \
                                    const Matrix<Real>&, const Matrix<Real>&, ErrorNorm,          \
                                    nn::MlpParams<Real>*);

HABI_INSTANTIATE(float)
HABI_INSTANTIATE(double)
#undef HABI_INSTANTIATE

}  // namespace habi::habitizer
