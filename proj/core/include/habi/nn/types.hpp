#pragma once

#include <Eigen/Dense>

namespace habi {

template <class Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

template <class Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

}  // namespace habi
