#pragma once

#include "habi/nn/types.hpp"

namespace habi::nn {

/// out = a * b. Shared by the tape and the plain forward pass so both give
/// bit-identical results.
///
/// For a handful of columns Eigen's blocked GEMM spends most of its time
/// packing `a`, and one matrix-vector product per column is faster. Results
/// with one or two rows stay on GEMM, which is cheaper there.
template <class Real>
void product_into(const Matrix<Real>& a, const Matrix<Real>& b, Matrix<Real>& out) {
  constexpr Index kSmallBatch = 8;
  out.resize(a.rows(), b.cols());
  if (b.cols() <= kSmallBatch && a.rows() > 2) {
    for (Index j = 0; j < b.cols(); ++j) out.col(j).noalias() = a * b.col(j);
  } else {
    out.noalias() = a * b;
  }
}

}  // namespace habi::nn
