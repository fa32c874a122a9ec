#include "cfrl/env.hpp"

#include <algorithm>
#include <limits>

namespace cfrl {

TaskMode parse_task(std::string_view name) {
  if (name == "TaskI" || name == "I" || name == "1" || name == "task1") return TaskMode::TaskI;
  if (name == "TaskII" || name == "II" || name == "2" || name == "task2") return TaskMode::TaskII;
  throw std::invalid_argument("unknown task '" + std::string(name) + "' (use TaskI or TaskII)");
}

std::string to_string(TaskMode task) { return task == TaskMode::TaskI ? "TaskI" : "TaskII"; }

ActionMask ActionMask::all(int n) {
  ActionMask mask;
  mask.bits_.assign(static_cast<std::size_t>(n), 1);
  mask.count_ = n;
  return mask;
}

ActionMask ActionMask::of(int n, const std::vector<int>& items) {
  ActionMask mask;
  mask.bits_.assign(static_cast<std::size_t>(n), 0);
  for (int i : items) {
    if (i < 0 || i >= n) throw std::out_of_range("mask item out of range");
    if (!mask.bits_[i]) {
      mask.bits_[i] = 1;
      ++mask.count_;
    }
  }
  return mask;
}

void ActionMask::remove(int item) {
  if (!contains(item)) throw IllegalActionError("item " + std::to_string(item) + " is not available");
  bits_[item] = 0;
  --count_;
}

int ActionMask::nth(int k) const {
  if (k < 0 || k >= count_) throw std::out_of_range("mask position out of range");
  for (int i = 0; i < universe(); ++i) {
    if (bits_[i] && k-- == 0) return i;
  }
  throw std::logic_error("mask count out of sync");
}

std::vector<int> ActionMask::items() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(count_));
  for_each([&](int i) { out.push_back(i); });
  return out;
}

int masked_argmax(const Eigen::Ref<const Eigen::VectorXd>& values, const ActionMask& mask) {
  if (mask.empty()) throw std::invalid_argument("empty action mask");
  if (values.size() != mask.universe()) throw std::invalid_argument("value vector does not match mask universe");
  int best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  const double* v = values.data();
  mask.for_each([&](int i) {
    if (v[i] > best_value || best < 0) {
      best = i;
      best_value = v[i];
    }
  });
  return best;
}

Eigen::SparseVector<double> EnvState::raw_state() const {
  Eigen::SparseVector<double> v(action_mask.universe());
  std::vector<std::pair<int, double>> entries;
  for (std::size_t k = 0; k < asked.size(); ++k) {
    if (observed[k] != 0.0) entries.emplace_back(asked[k], observed[k]);
  }
  std::sort(entries.begin(), entries.end());
  v.reserve(static_cast<Eigen::Index>(entries.size()));
  for (auto [i, r] : entries) v.insertBack(i) = r;
  return v;
}

RecommendationEnv RecommendationEnv::reset(const RatingDataset& ds, const MfModel* model, int user, TaskMode task,
                                           int horizon) {
  if (user < 0 || user >= ds.num_users()) throw std::out_of_range("user index out of range");
  if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  const auto profile = ds.user_ratings(user);
  if (task == TaskMode::TaskI && static_cast<int>(profile.size()) < horizon) {
    throw std::invalid_argument("user " + std::to_string(user) + " has " + std::to_string(profile.size()) +
                                " rated items, fewer than the horizon " + std::to_string(horizon));
  }

  RecommendationEnv env(ds, model);
  EnvState& s = env.state_;
  s.user = user;
  s.t = 0;
  s.horizon = horizon;
  s.task = task;
  if (model != nullptr) s.cf_state = init_user_state(model->d());
  if (task == TaskMode::TaskII) {
    s.action_mask = ActionMask::all(ds.num_items());
  } else {
    std::vector<int> rated;
    rated.reserve(profile.size());
    for (const auto& e : profile) rated.push_back(e.item);
    s.action_mask = ActionMask::of(ds.num_items(), rated);
  }
  return env;
}

StepResult RecommendationEnv::step(int action) {
  EnvState& s = state_;
  if (done()) throw IllegalActionError("step after the episode finished");
  if (!s.action_mask.contains(action)) {
    throw IllegalActionError("item " + std::to_string(action) + " is not an available action");
  }
  const double reward = ds_->rating(s.user, action);
  s.action_mask.remove(action);
  s.asked.push_back(action);
  s.observed.push_back(reward);

  if (model_ != nullptr) s.cf_state = online_update(*model_, s.cf_state, action, reward);
  ++s.t;
  return {reward, done()};
}

}  // namespace cfrl
