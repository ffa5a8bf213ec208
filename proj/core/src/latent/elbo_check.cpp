#include "habi/latent/elbo_check.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "habi/errors.hpp"

namespace habi::latent {
namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

Vector<double> standard_normal(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector<double> v(n);
  for (Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace

double LinearGaussianModel::log_likelihood(const Vector<double>& z) const {
  const Vector<double> r = x - (A * z + b);
  const double n = static_cast<double>(x.size());
  return -0.5 * r.squaredNorm() / (noise_sigma * noise_sigma) - n * std::log(noise_sigma) -
         0.5 * n * kLog2Pi;
}

double LinearGaussianModel::log_evidence() const {
  const Matrix<double> prior_cov = prior.sigma.array().square().matrix().asDiagonal();
  Matrix<double> cov = A * prior_cov * A.transpose();
  cov.diagonal().array() += noise_sigma * noise_sigma;
  const Vector<double> r = x - (A * prior.mu + b);
  Eigen::LLT<Matrix<double>> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericalError("log_evidence: covariance not SPD");
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double quad = r.dot(llt.solve(r));
  return -0.5 * (quad + log_det + static_cast<double>(x.size()) * kLog2Pi);
}

DiagonalGaussian<double> LinearGaussianModel::exact_posterior() const {
  Matrix<double> precision = (A.transpose() * A) / (noise_sigma * noise_sigma);
  const Matrix<double> off = precision - Matrix<double>(precision.diagonal().asDiagonal());
  if (off.cwiseAbs().maxCoeff() > 1e-12 * (1.0 + precision.cwiseAbs().maxCoeff())) {
    throw UsageError("exact_posterior: posterior is not diagonal for this A");
  }
  const Vector<double> prior_prec = prior.sigma.array().square().inverse().matrix();
  const Vector<double> post_prec = precision.diagonal() + prior_prec;
  const Vector<double> rhs =
      prior_prec.cwiseProduct(prior.mu) + A.transpose() * (x - b) / (noise_sigma * noise_sigma);
  DiagonalGaussian<double> post;
  post.mu = rhs.cwiseQuotient(post_prec);
  post.sigma = post_prec.array().rsqrt().matrix();
  return post;
}

ElboEstimate elbo_bound_check(const LinearGaussianModel& model, const DiagonalGaussian<double>& q,
                              const DiagonalGaussian<double>& p, int n_mc, std::mt19937_64& rng) {
  if (n_mc < 10000) throw UsageError("elbo_bound_check: n_mc must be at least 10000");
  q.validate();
  p.validate();
  if (q.dim() != model.A.cols() || p.dim() != model.A.cols()) {
    throw ConfigError("elbo_bound_check: latent dimension mismatch");
  }
  const double n = static_cast<double>(n_mc);

  // E_q[log P(x|z)]
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < n_mc; ++i) {
    const double ll = model.log_likelihood(reparam_sample(q, standard_normal(q.dim(), rng)));
    sum += ll;
    sum_sq += ll * ll;
  }
  const double mean_ll = sum / n;
  const double var_ll = std::max(0.0, sum_sq / n - mean_ll * mean_ll) * n / (n - 1.0);

  // log E_p[P(x|z)] in log space.
  std::vector<double> lls(static_cast<std::size_t>(n_mc));
  double max_ll = -std::numeric_limits<double>::infinity();
  for (auto& ll : lls) {
    ll = model.log_likelihood(reparam_sample(p, standard_normal(p.dim(), rng)));
    max_ll = std::max(max_ll, ll);
  }
  if (!std::isfinite(max_ll)) throw NumericalError("elbo_bound_check: likelihood is zero everywhere");
  double w_sum = 0.0;
  double w_sq = 0.0;
  for (double ll : lls) {
    const double w = std::exp(ll - max_ll);
    w_sum += w;
    w_sq += w * w;
  }
  const double w_mean = w_sum / n;
  if (!(w_mean > 0.0)) throw NumericalError("elbo_bound_check: likelihood is zero everywhere");
  const double w_var = std::max(0.0, w_sq / n - w_mean * w_mean) * n / (n - 1.0);

  ElboEstimate est;
  est.elbo = mean_ll - kl_divergence(q, p);
  est.elbo_stderr = std::sqrt(var_ll / n);
  est.log_evidence = max_ll + std::log(w_mean);
  est.log_evidence_stderr = std::sqrt(w_var / n) / w_mean;
  return est;
}

}  // namespace habi::latent
