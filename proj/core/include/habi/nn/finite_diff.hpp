#pragma once

#include <functional>
#include <span>
#include <vector>

#include "habi/nn/mlp.hpp"

namespace habi::nn {

/// Central differences (f(p+h) - f(p-h)) / 2h, one entry at a time. Each entry
/// is restored to its exact original value afterwards. Non-differentiable
/// points are not detected; the estimate is returned as computed.
std::vector<double> finite_diff_grad(const std::function<double()>& loss, std::span<double> params,
                                     double h);

/// Same, perturbing every weight and bias of `net` in place.
MlpParams<double> finite_diff_grad(const std::function<double()>& loss, MlpParams<double>& net,
                                   double h);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor) over matching entries.
double max_relative_error(const MlpParams<double>& a, const MlpParams<double>& b,
                          double floor = 1e-6);

/// Smallest |pre-activation| over every ReLU unit of `net` on `inputs`.
/// Gradient probes closer than the finite-difference step to a kink are
/// meaningless, so callers redraw probes that come too close.
double min_abs_relu_preactivation(const MlpParams<double>& net, const Matrix<double>& inputs);

}  // namespace habi::nn
