#include "habi/latent/gaussian.hpp"

#include <cmath>
#include <numbers>

#include "habi/errors.hpp"

namespace habi::latent {

template <class Real>
void DiagonalGaussian<Real>::validate() const {
  if (mu.size() != sigma.size()) throw ConfigError("gaussian: mu and sigma lengths differ");
  if (!mu.allFinite() || !sigma.allFinite()) throw ConfigError("gaussian: non-finite entry");
  if (sigma.size() > 0 && sigma.minCoeff() <= Real(0)) {
    throw ConfigError("gaussian: sigma must be positive");
  }
}

template <class Real>
Vector<Real> sigma_from_raw(const Vector<Real>& xi) {
  return xi.unaryExpr([](Real v) {
    return std::max(v, Real(0)) + std::log1p(std::exp(-std::abs(v))) + static_cast<Real>(kSigmaFloor);
  });
}

template <class Real>
void GaussianHead<Real>::validate() const {
  mu.validate();
  xi.validate();
  if (mu.input_dim() != xi.input_dim() || mu.output_dim() != xi.output_dim()) {
    throw ConfigError("gaussian head: mu and xi networks have different shapes");
  }
}

template <class Real>
GaussianHead<Real> make_head(int input_dim, std::span<const int> hidden, int latent_dim,
                             std::mt19937_64& rng) {
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(latent_dim);
  GaussianHead<Real> head;
  head.mu = nn::make_mlp<Real>(sizes, rng);
  head.xi = nn::make_mlp<Real>(sizes, rng);
  return head;
}

template <class Real>
DiagonalGaussian<Real> encode_prior(const GaussianHead<Real>& head, const Vector<Real>& state) {
  if (state.size() != head.input_dim()) {
    throw ConfigError("encode_prior: state has length " + std::to_string(state.size()) +
                      ", head expects " + std::to_string(head.input_dim()));
  }
  return {nn::mlp_forward(head.mu, state), sigma_from_raw<Real>(nn::mlp_forward(head.xi, state))};
}

template <class Real>
DiagonalGaussian<Real> encode_posterior(const GaussianHead<Real>& head, const Vector<Real>& state,
                                        const Vector<Real>& action) {
  if (state.size() + action.size() != head.input_dim()) {
    throw ConfigError("encode_posterior: state+action has length " +
                      std::to_string(state.size() + action.size()) + ", head expects " +
                      std::to_string(head.input_dim()));
  }
  Vector<Real> input(state.size() + action.size());
  input << state, action;
  return {nn::mlp_forward(head.mu, input), sigma_from_raw<Real>(nn::mlp_forward(head.xi, input))};
}

template <class Real>
Vector<Real> reparam_sample(const DiagonalGaussian<Real>& g, const Vector<Real>& noise) {
  if (noise.size() != g.dim()) throw ConfigError("reparam_sample: noise length != latent dim");
  return g.mu + g.sigma.cwiseProduct(noise);
}

template <class Real>
double kl_divergence(const DiagonalGaussian<Real>& q, const DiagonalGaussian<Real>& p) {
  if (q.dim() != p.dim() || q.sigma.size() != p.sigma.size()) {
    throw ConfigError("kl_divergence: dimension mismatch");
  }
  double total = 0.0;
  for (Index i = 0; i < q.dim(); ++i) {
    const double sq = q.sigma(i);
    const double sp = p.sigma(i);
    const double dm = static_cast<double>(q.mu(i)) - static_cast<double>(p.mu(i));
    total += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
  }
  return total;
}

template <class Real>
double log_density(const DiagonalGaussian<Real>& g, const Vector<Real>& z) {
  if (z.size() != g.dim()) throw ConfigError("log_density: dimension mismatch");
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  double total = 0.0;
  for (Index i = 0; i < g.dim(); ++i) {
    const double s = g.sigma(i);
    const double u = (static_cast<double>(z(i)) - static_cast<double>(g.mu(i))) / s;
    total += -0.5 * u * u - std::log(s) - kHalfLog2Pi;
  }
  return total;
}

template <class Real>
TapedGaussian<Real> encode_taped(const GaussianHead<Real>& head, nn::Tape<Real>& tape,
                                 typename nn::Tape<Real>::Var inputs,
                                 std::type_identity_t<GaussianHead<Real>>* grads) {
  auto mu = nn::mlp_forward(head.mu, tape, inputs, grads != nullptr ? &grads->mu : nullptr);
  auto xi = nn::mlp_forward(head.xi, tape, inputs, grads != nullptr ? &grads->xi : nullptr);
  auto sigma = tape.add_scalar(tape.softplus(xi), static_cast<Real>(kSigmaFloor));
  return {mu, sigma};
}

template <class Real>
typename nn::Tape<Real>::Var reparam_taped(nn::Tape<Real>& tape, const TapedGaussian<Real>& g,
                                           const Matrix<Real>& noise) {
  return tape.add(g.mu, tape.mul(g.sigma, tape.constant(noise)));
}

template <class Real>
typename nn::Tape<Real>::Var kl_taped(nn::Tape<Real>& tape, const TapedGaussian<Real>& q,
                                      const TapedGaussian<Real>& p) {
  // log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
  auto log_ratio = tape.sub(tape.log(p.sigma), tape.log(q.sigma));
  auto num = tape.add(tape.square(q.sigma), tape.square(tape.sub(q.mu, p.mu)));
  auto quad = tape.div(num, tape.scale(tape.square(p.sigma), Real(2)));
  auto per_dim = tape.add_scalar(tape.add(log_ratio, quad), Real(-0.5));
  return tape.col_sum(per_dim);
}

#define HABI_INSTANTIATE(Real)                                                                    \
  template struct DiagonalGaussian<Real>;                                                         \
  template struct GaussianHead<Real>;                                                             \
  template Vector<Real> sigma_from_raw(const Vector<Real>&);                                      \
  template GaussianHead<Real> make_head(int, std::span<const int>, int, std::mt19937_64&);        \
  template DiagonalGaussian<Real> encode_prior(const GaussianHead<Real>&, const Vector<Real>&);   \
  template DiagonalGaussian<Real> encode_posterior(const GaussianHead<Real>&,                     \
                                                   const Vector<Real>&, const Vector<Real>&);     \
  template Vector<Real> reparam_sample(const DiagonalGaussian<Real>&, const Vector<Real>&);       \
  template double kl_divergence(const DiagonalGaussian<Real>&, const DiagonalGaussian<Real>&);    \
  template double log_density(const DiagonalGaussian<Real>&, const Vector<Real>&);                \
  template TapedGaussian<Real> encode_taped(const GaussianHead<Real>&, nn::Tape<Real>&,           \
                                            nn::Tape<Real>::Var, GaussianHead<Real>*);            \
  template nn::Tape<Real>::Var reparam_taped(nn::Tape<Real>&, const TapedGaussian<Real>&,         \
                                             const Matrix<Real>&);                                \
  template nn::Tape<Real>::Var kl_taped(nn::Tape<Real>&, const TapedGaussian<Real>&,              \
                                        const TapedGaussian<Real>&);

HABI_INSTANTIATE(float)
HABI_INSTANTIATE(double)
#undef HABI_INSTANTIATE

}  // namespace habi::latent
