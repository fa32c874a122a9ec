#pragma once

#include <cstdint>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfrl/dataset.hpp"
#include "cfrl/mf.hpp"

namespace cfrl {

enum class TaskMode {
  TaskI,   // actions restricted to the user's rated items
  TaskII,  // all items available; unrated items pay 0
};

TaskMode parse_task(std::string_view name);
std::string to_string(TaskMode task);

class IllegalActionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Set of available item indices over a fixed universe [0, n).
class ActionMask {
 public:
  ActionMask() = default;
  static ActionMask all(int n);
  static ActionMask of(int n, const std::vector<int>& items);

  int universe() const { return static_cast<int>(bits_.size()); }
  int size() const { return count_; }
  bool empty() const { return count_ == 0; }
  bool contains(int item) const { return item >= 0 && item < universe() && bits_[item]; }
  void remove(int item);

  /// The k-th available item in index order (0 <= k < size()).
  int nth(int k) const;
  std::vector<int> items() const;

  template <typename F>
  void for_each(F&& f) const {
    const std::uint8_t* bits = bits_.data();
    for (int i = 0, n = universe(); i < n; ++i) {
      if (bits[i]) f(i);
    }
  }

  friend bool operator==(const ActionMask&, const ActionMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;  // bytes rather than vector<bool>: scanned on every step
  int count_ = 0;
};

/// Argmax of `values` over the mask; ties go to the lowest index. Throws on an empty mask.
int masked_argmax(const Eigen::Ref<const Eigen::VectorXd>& values, const ActionMask& mask);

/// Per-episode state of the CF-based MDP.
struct EnvState {
  int user = 0;
  int t = 0;
  int horizon = 0;
  TaskMode task = TaskMode::TaskI;
  std::vector<int> asked;          // actions taken so far, in order
  std::vector<double> observed;    // reward observed for each asked item (0 for TaskII misses)
  UserLatentState cf_state;        // empty vector when no MF model is attached
  ActionMask action_mask;

  /// n-dimensional vector of the ratings observed so far; misses stay 0.
  Eigen::SparseVector<double> raw_state() const;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
};

/// One user's episode over logged ratings. Copyable: a copy is an independent snapshot
/// sharing the read-only dataset and model.
class RecommendationEnv {
 public:
  /// Throws std::invalid_argument in TaskI when the user has fewer rated items than the horizon.
  /// `model` may be null for policies that never look at the CF state.
  static RecommendationEnv reset(const RatingDataset& ds, const MfModel* model, int user, TaskMode task,
                                 int horizon);

  /// Pays the logged rating (0 if unrated), records it in the raw state, updates the CF state
  /// with one SGD step toward the observed reward, and removes the action from the mask.
  StepResult step(int action);

  const EnvState& state() const { return state_; }
  const ActionMask& available_actions() const { return state_.action_mask; }
  bool done() const { return state_.t >= state_.horizon; }
  const RatingDataset& dataset() const { return *ds_; }
  const MfModel* model() const { return model_; }

 private:
  RecommendationEnv(const RatingDataset& ds, const MfModel* model) : ds_(&ds), model_(model) {}

  const RatingDataset* ds_;
  const MfModel* model_;
  EnvState state_;
};

}  // namespace cfrl
