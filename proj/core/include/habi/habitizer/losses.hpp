#pragma once

#include "habi/habitizer/model.hpp"
#include "habi/nn/tape.hpp"

namespace habi::habitizer {

/// Guard inside the square root of the Euclidean norm.
inline constexpr double kNormEps = 1e-12;

enum class ErrorNorm {
  kEuclidean,  // ||x||_2
  kSquared,    // ||x||_2^2
};

/// Batch mean of ||decoded - target|| per column (1x1).
template <class Real>
typename nn::Tape<Real>::Var recon_taped(nn::Tape<Real>& tape, typename nn::Tape<Real>::Var decoded,
                                         const Matrix<Real>& target, ErrorNorm norm);

/// ||Decoder(z_q) - a*|| for one sample, tape-free.
template <class Real>
double recon_loss(const nn::MlpParams<Real>& decoder, const Vector<Real>& z_q,
                  const Vector<Real>& a_star, ErrorNorm norm = ErrorNorm::kEuclidean);

/// Critic regression onto teacher Q values. `z_q` (latent_dim x B) is
/// detached on entry. `candidates` is action_dim x (B * n) with sample b
/// owning columns [b*n, (b+1)*n); `q` is n x B. Returns the mean over all
/// B * n pairs of ||Critic([z_q_b; a_bi]) - q_bi||.
template <class Real>
typename nn::Tape<Real>::Var critic_taped(const nn::MlpParams<Real>& critic, nn::Tape<Real>& tape,
                                          typename nn::Tape<Real>::Var z_q,
                                          const Matrix<Real>& candidates, const Matrix<Real>& q,
                                          ErrorNorm norm,
                                          std::type_identity_t<nn::MlpParams<Real>>* grads = nullptr);

/// Single-sample, tape-free form. UsageError on an empty candidate list.
template <class Real>
double critic_loss(const nn::MlpParams<Real>& critic, const Vector<Real>& z_q,
                   const Matrix<Real>& candidates, const Vector<Real>& q,
                   ErrorNorm norm = ErrorNorm::kEuclidean);

/// Gradients of the policy loss for each trainable piece.
template <class Real>
struct PolicyGrads {
  latent::GaussianHead<Real> prior;
  latent::GaussianHead<Real> posterior;
  nn::MlpParams<Real> decoder;
};

struct PolicyTerms {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// recon + beta * mean KL(q || p) on a batch (columns). Fills `grads` when non-null.
/// `noise` is latent_dim x B standard normal.
template <class Real>
PolicyTerms policy_loss(const HabiModel<Real>& model, const Matrix<Real>& states,
                        const Matrix<Real>& best_actions, const Matrix<Real>& noise, double beta,
                        ErrorNorm norm, PolicyGrads<Real>* grads = nullptr);

/// Critic loss with z_q drawn from the posterior using the same noise as the
/// policy step. Fills `grads` (critic only) when non-null.
template <class Real>
double critic_batch_loss(const HabiModel<Real>& model, const Matrix<Real>& states,
                         const Matrix<Real>& best_actions, const Matrix<Real>& noise,
                         const Matrix<Real>& candidates, const Matrix<Real>& q, ErrorNorm norm,
                         nn::MlpParams<Real>* grads = nullptr);

}  // namespace habi::habitizer
