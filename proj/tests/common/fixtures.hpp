#pragma once

// Small hand-built problems shared by the unit and acceptance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "cfrl/agent.hpp"
#include "cfrl/dataset.hpp"

namespace cfrl::fixtures {

/// Deterministic three-state episodic MDP with two actions everywhere:
///   s0 --a0 (r=1)--> s1,  s0 --a1 (r=0)--> s2,
///   s1 --a0 (r=0)--> end, s1 --a1 (r=1)--> end,
///   s2 --a0 (r=5)--> end, s2 --a1 (r=2)--> end.
/// States are one-hot vectors; every episode starts in s0.
struct ToyMdp {
  static constexpr int kStates = 3;
  static constexpr int kActions = 2;
  static constexpr int kEnd = -1;
  static constexpr std::array<std::array<int, kActions>, kStates> next{{{1, 2}, {kEnd, kEnd}, {kEnd, kEnd}}};
  static constexpr std::array<std::array<double, kActions>, kStates> reward{{{1.0, 0.0}, {0.0, 1.0}, {5.0, 2.0}}};
};

/// Q* by value iteration, iterated until successive sweeps agree to 1e-14.
inline std::array<std::array<double, ToyMdp::kActions>, ToyMdp::kStates> toy_value_iteration(double gamma) {
  std::array<std::array<double, ToyMdp::kActions>, ToyMdp::kStates> q{};
  for (int sweep = 0; sweep < 10000; ++sweep) {
    double change = 0.0;
    auto updated = q;
    for (int s = 0; s < ToyMdp::kStates; ++s) {
      for (int a = 0; a < ToyMdp::kActions; ++a) {
        const int nxt = ToyMdp::next[s][a];
        const double future = nxt == ToyMdp::kEnd ? 0.0 : std::max(q[nxt][0], q[nxt][1]);
        updated[s][a] = ToyMdp::reward[s][a] + gamma * future;
        change = std::max(change, std::fabs(updated[s][a] - q[s][a]));
      }
    }
    q = updated;
    if (change < 1e-14) break;
  }
  return q;
}

inline StateVector toy_state(int s) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(ToyMdp::kStates);
  if (s >= 0) v[s] = 1.0;
  return to_state_vector(v);
}

class ToyMdpEnv : public TrainingEnvironment {
 public:
  int state_dim() const override { return ToyMdp::kStates; }
  int num_actions() const override { return ToyMdp::kActions; }
  int begin_episode(Rng&) override {
    state_ = 0;
    return 0;
  }
  StateVector observe() const override { return toy_state(state_); }
  const ActionMask& mask() const override { return mask_; }
  StepResult step(int action) override {
    const double r = ToyMdp::reward[state_][action];
    state_ = ToyMdp::next[state_][action];
    return {r, state_ == ToyMdp::kEnd};
  }

 private:
  int state_ = 0;
  ActionMask mask_ = ActionMask::all(ToyMdp::kActions);
};

/// Training settings under which the linear Q-network on the toy MDP is effectively tabular.
inline TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.episodes = 3000;
  cfg.horizon = 2;
  cfg.gamma = 0.9;
  cfg.epsilon = 1.0;  // uniform behaviour policy; Q-learning is off-policy
  cfg.epsilon_end = 1.0;
  cfg.alpha = 0.1;
  cfg.hidden = {};
  cfg.batch_size = 8;
  cfg.sync_period = 10;
  cfg.replay_capacity = 1000;
  cfg.seed = 5;
  return cfg;
}

/// Five users and six items; item id 4 is rated 5 by everyone and every other rating is at
/// most 3, so recommending item 4 first is optimal for every user.
inline RatingDataset planted_dataset() {
  const std::vector<std::array<int, 3>> triples{
      {1, 1, 3}, {1, 2, 1}, {1, 4, 5}, {1, 6, 2},             //
      {2, 1, 2}, {2, 3, 3}, {2, 4, 5}, {2, 5, 1},             //
      {3, 2, 3}, {3, 3, 1}, {3, 4, 5}, {3, 6, 3},             //
      {4, 1, 1}, {4, 4, 5}, {4, 5, 3}, {4, 6, 2},             //
      {5, 1, 3}, {5, 2, 2}, {5, 3, 2}, {5, 4, 5}, {5, 5, 3},  //
  };
  std::vector<RatingRecord> records;
  for (const auto& t : triples) records.push_back({t[0], t[1], t[2], 0});
  return RatingDataset::from_records(records);
}

constexpr std::int64_t kPlantedItemId = 4;

inline MfParams planted_mf_params() { return {3, 0.5, 0.05, 300}; }

/// A short horizon and gamma = 0.5 keep the value gap between "planted item first" and
/// "planted item second" at 1 or more (with gamma = 0.9 it is only (1 - gamma)(5 - r)).
inline TrainConfig planted_config() {
  TrainConfig cfg;
  cfg.episodes = 3000;
  cfg.horizon = 2;
  cfg.gamma = 0.5;
  cfg.epsilon = 0.5;
  cfg.epsilon_end = 0.5;
  cfg.alpha = 0.01;
  cfg.hidden = {16};
  cfg.batch_size = 16;
  cfg.sync_period = 50;
  cfg.replay_capacity = 5000;
  cfg.task = TaskMode::TaskII;
  cfg.seed = 17;
  return cfg;
}

}  // namespace cfrl::fixtures
