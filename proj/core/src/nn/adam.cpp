#include "habi/nn/adam.hpp"

#include <cmath>
#include <string>

#include "habi/errors.hpp"

namespace habi::nn {

template <class Real>
void adam_update(MlpParams<Real>& params, const MlpParams<Real>& grads, AdamState<Real>& state,
                 double lr, std::string_view module) {
  if (!(lr > 0.0)) throw UsageError("adam_update: learning rate must be positive");
  if (grads.layers.size() != params.layers.size()) {
    throw ConfigError("adam_update: gradient layout does not match " + std::string(module));
  }
  if (state.m.layers.size() != params.layers.size()) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& g = grads.layers[k];
    const auto& p = params.layers[k];
    if (g.weight.rows() != p.weight.rows() || g.weight.cols() != p.weight.cols() ||
        g.bias.size() != p.bias.size()) {
      throw ConfigError("adam_update: gradient shape mismatch in " + std::string(module) +
                        " layer " + std::to_string(k));
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw TrainingError(std::string(module),
                          "non-finite gradient in layer " + std::to_string(k));
    }
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const Real b1 = static_cast<Real>(state.beta1);
  const Real b2 = static_cast<Real>(state.beta2);
  const Real c1 = static_cast<Real>(1.0 / (1.0 - std::pow(state.beta1, t)));
  const Real c2 = static_cast<Real>(1.0 / (1.0 - std::pow(state.beta2, t)));
  const Real step = static_cast<Real>(lr);
  const Real eps = static_cast<Real>(state.eps);

  auto apply = [&](auto& param, auto& m, auto& v, const auto& g) {
    m.array() = b1 * m.array() + (Real(1) - b1) * g.array();
    v.array() = b2 * v.array() + (Real(1) - b2) * g.array().square();
    param.array() -= step * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    apply(params.layers[k].weight, state.m.layers[k].weight, state.v.layers[k].weight,
          grads.layers[k].weight);
    apply(params.layers[k].bias, state.m.layers[k].bias, state.v.layers[k].bias,
          grads.layers[k].bias);
  }
}

template void adam_update(MlpParams<float>&, const MlpParams<float>&, AdamState<float>&, double,
                          std::string_view);
template void adam_update(MlpParams<double>&, const MlpParams<double>&, AdamState<double>&,
                          double, std::string_view);

}  // namespace habi::nn
