#pragma once

#include <Eigen/SparseCore>

#include "cfrl/env.hpp"

namespace cfrl {

/// Network input. CF states are dense d-vectors stored sparsely; raw rating vectors are
/// genuinely sparse (at most T nonzeros out of n).
using StateVector = Eigen::SparseVector<double>;

StateVector to_state_vector(const Eigen::Ref<const Eigen::VectorXd>& dense);

/// (s_t, a_t, r_{t+1}, s_{t+1}) plus the actions still available at s_{t+1}.
struct Transition {
  StateVector state;
  int action = 0;
  double reward = 0.0;
  StateVector next_state;
  bool done = false;
  ActionMask next_mask;
};

}  // namespace cfrl
