#pragma once

#include <random>

#include "habi/latent/gaussian.hpp"

namespace habi::latent {

/// x | z ~ N(A z + b, noise_sigma^2 I) with a diagonal Gaussian prior on z.
/// Everything about this model is tractable, which makes it a test bed for
/// the evidence bound.
struct LinearGaussianModel {
  Matrix<double> A;
  Vector<double> b;
  double noise_sigma = 1.0;
  DiagonalGaussian<double> prior;
  Vector<double> x;

  double log_likelihood(const Vector<double>& z) const;
  /// Closed-form log p(x).
  double log_evidence() const;
  /// Exact posterior p(z | x). Throws UsageError if it is not diagonal
  /// (that requires A^T A to be diagonal).
  DiagonalGaussian<double> exact_posterior() const;
};

struct ElboEstimate {
  double elbo = 0.0;
  double elbo_stderr = 0.0;
  double log_evidence = 0.0;
  double log_evidence_stderr = 0.0;
};

/// elbo = E_q[log P(x|z)] - KL(q || p) by Monte Carlo over q (KL in closed
/// form); log_evidence = log mean_{z ~ p} P(x|z). Both standard errors are
/// reported (the second by the delta method). Requires n_mc >= 10000.
/// Throws NumericalError if every sampled likelihood underflows.
ElboEstimate elbo_bound_check(const LinearGaussianModel& model, const DiagonalGaussian<double>& q,
                              const DiagonalGaussian<double>& p, int n_mc, std::mt19937_64& rng);

}  // namespace habi::latent
