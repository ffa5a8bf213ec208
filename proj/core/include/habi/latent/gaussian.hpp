#pragma once

#include "habi/nn/mlp.hpp"
#include "habi/nn/tape.hpp"
#include "habi/nn/types.hpp"

namespace habi::latent {

/// Additive floor on every standard deviation produced by an encoder head.
inline constexpr double kSigmaFloor = 0.01;

template <class Real>
struct DiagonalGaussian {
  Vector<Real> mu;
  Vector<Real> sigma;

  Index dim() const { return mu.size(); }
  /// Throws ConfigError on length mismatch, non-finite entries or sigma <= 0.
  void validate() const;
};

/// softplus(xi) + kSigmaFloor, elementwise.
template <class Real>
Vector<Real> sigma_from_raw(const Vector<Real>& xi);

/// Encoder head: one network for the mean, one for the raw scale xi.
template <class Real>
struct GaussianHead {
  nn::MlpParams<Real> mu;
  nn::MlpParams<Real> xi;

  Index input_dim() const { return mu.input_dim(); }
  Index latent_dim() const { return mu.output_dim(); }
  void validate() const;
  GaussianHead zeros_like() const { return {mu.zeros_like(), xi.zeros_like()}; }
  friend bool operator==(const GaussianHead&, const GaussianHead&) = default;
};

/// Head with two identically shaped MLPs [in, hidden..., latent].
template <class Real>
GaussianHead<Real> make_head(int input_dim, std::span<const int> hidden, int latent_dim,
                             std::mt19937_64& rng);

/// Prior p(z | s).
template <class Real>
DiagonalGaussian<Real> encode_prior(const GaussianHead<Real>& head, const Vector<Real>& state);

/// Posterior q(z | s, a); the head sees [state; action].
template <class Real>
DiagonalGaussian<Real> encode_posterior(const GaussianHead<Real>& head, const Vector<Real>& state,
                                        const Vector<Real>& action);

/// z = mu + sigma * noise.
template <class Real>
Vector<Real> reparam_sample(const DiagonalGaussian<Real>& g, const Vector<Real>& noise);

/// KL(q || p) for diagonal Gaussians, summed over dimensions.
template <class Real>
double kl_divergence(const DiagonalGaussian<Real>& q, const DiagonalGaussian<Real>& p);

/// Log density of z under g.
template <class Real>
double log_density(const DiagonalGaussian<Real>& g, const Vector<Real>& z);

// Taped counterparts. Batches are column-major: one column per sample.

template <class Real>
struct TapedGaussian {
  typename nn::Tape<Real>::Var mu;
  typename nn::Tape<Real>::Var sigma;
};

template <class Real>
TapedGaussian<Real> encode_taped(const GaussianHead<Real>& head, nn::Tape<Real>& tape,
                                 typename nn::Tape<Real>::Var inputs,
                                 std::type_identity_t<GaussianHead<Real>>* grads = nullptr);

/// mu + sigma * noise on the tape.
template <class Real>
typename nn::Tape<Real>::Var reparam_taped(nn::Tape<Real>& tape, const TapedGaussian<Real>& g,
                                           const Matrix<Real>& noise);

/// Per-sample KL(q || p) summed over latent rows, 1 x B.
template <class Real>
typename nn::Tape<Real>::Var kl_taped(nn::Tape<Real>& tape, const TapedGaussian<Real>& q,
                                      const TapedGaussian<Real>& p);

}  // namespace habi::latent
