#include "habi/envs/env.hpp"

namespace habi::envs {

Vector<double> clamp_action(const Vector<double>& a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

}  // namespace habi::envs
