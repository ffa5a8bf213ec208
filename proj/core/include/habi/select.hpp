#pragma once

#include "habi/errors.hpp"
#include "habi/nn/types.hpp"

namespace habi {

/// Index of the largest score; ties go to the lowest index.
template <class Derived>
Index argmax_lowest(const Eigen::MatrixBase<Derived>& scores) {
  if (scores.size() == 0) throw UsageError("argmax over an empty score list");
  Index best = 0;
  for (Index i = 1; i < scores.size(); ++i) {
    if (scores(i) > scores(best)) best = i;
  }
  return best;
}

}  // namespace habi
