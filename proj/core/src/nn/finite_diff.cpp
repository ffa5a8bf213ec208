#include "habi/nn/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "habi/errors.hpp"

namespace habi::nn {

std::vector<double> finite_diff_grad(const std::function<double()>& loss, std::span<double> params,
                                     double h) {
  if (!(h > 0.0)) throw UsageError("finite_diff_grad: step must be positive");
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss();
    params[i] = saved - h;
    const double down = loss();
    params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

MlpParams<double> finite_diff_grad(const std::function<double()>& loss, MlpParams<double>& net,
                                   double h) {
  MlpParams<double> grad = net.zeros_like();
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& w = net.layers[k].weight;
    auto& b = net.layers[k].bias;
    auto gw = finite_diff_grad(loss, std::span<double>(w.data(), static_cast<std::size_t>(w.size())), h);
    auto gb = finite_diff_grad(loss, std::span<double>(b.data(), static_cast<std::size_t>(b.size())), h);
    std::copy(gw.begin(), gw.end(), grad.layers[k].weight.data());
    std::copy(gb.begin(), gb.end(), grad.layers[k].bias.data());
  }
  return grad;
}

double max_relative_error(const MlpParams<double>& a, const MlpParams<double>& b, double floor) {
  if (a.layers.size() != b.layers.size()) throw UsageError("max_relative_error: layout mismatch");
  double worst = 0.0;
  auto scan = [&](const double* x, const double* y, Index n) {
    for (Index i = 0; i < n; ++i) {
      const double denom = std::max({std::abs(x[i]), std::abs(y[i]), floor});
      worst = std::max(worst, std::abs(x[i] - y[i]) / denom);
    }
  };
  for (std::size_t k = 0; k < a.layers.size(); ++k) {
    if (a.layers[k].weight.size() != b.layers[k].weight.size() ||
        a.layers[k].bias.size() != b.layers[k].bias.size()) {
      throw UsageError("max_relative_error: shape mismatch");
    }
    scan(a.layers[k].weight.data(), b.layers[k].weight.data(), a.layers[k].weight.size());
    scan(a.layers[k].bias.data(), b.layers[k].bias.data(), a.layers[k].bias.size());
  }
  return worst;
}

}  // namespace habi::nn

namespace habi::nn {

double min_abs_relu_preactivation(const MlpParams<double>& net, const Matrix<double>& inputs) {
  double best = std::numeric_limits<double>::infinity();
  Matrix<double> h = inputs;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Matrix<double> pre = net.layers[k].weight * h;
    pre.colwise() += net.layers[k].bias;
    const bool last = k + 1 == net.layers.size();
    const Activation act = last ? net.output_activation : net.hidden_activation;
    if (act == Activation::kRelu) best = std::min(best, pre.cwiseAbs().minCoeff());
    if (act == Activation::kRelu) pre = pre.cwiseMax(0.0);
    if (act == Activation::kTanh) pre = pre.array().tanh().matrix();
    h = std::move(pre);
  }
  return best;
}

}  // namespace habi::nn
