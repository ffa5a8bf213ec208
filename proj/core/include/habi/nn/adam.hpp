#pragma once

#include <cstdint>
#include <string_view>

#include "habi/nn/mlp.hpp"

namespace habi::nn {

/// Per-network Adam moments. `m` and `v` share the network's shape.
template <class Real>
struct AdamState {
  MlpParams<Real> m;
  MlpParams<Real> v;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_network(const MlpParams<Real>& net) {
    AdamState s;
    s.m = net.zeros_like();
    s.v = net.zeros_like();
    return s;
  }
};

/// One bias-corrected Adam step. Throws TrainingError naming `module` if any
/// gradient entry is non-finite; in that case nothing is modified.
template <class Real>
void adam_update(MlpParams<Real>& params, const MlpParams<Real>& grads, AdamState<Real>& state,
                 double lr, std::string_view module = "network");

}  // namespace habi::nn
