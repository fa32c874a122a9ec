#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cfrl/agent.hpp"
#include "cfrl/dataset.hpp"
#include "cfrl/env.hpp"
#include "cfrl/mf.hpp"
#include "cfrl/qnet.hpp"

namespace cfrl {

/// An interactive recommender evaluated over one user at a time.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(int user) = 0;
  /// Always returns a member of `mask`; throws std::invalid_argument on an empty mask.
  virtual int act(const ActionMask& mask) = 0;
  virtual void observe(int item, double reward) = 0;
  /// Independent copy for running episodes concurrently.
  virtual std::unique_ptr<Policy> clone() const = 0;
};

/// Uniform over the mask. Reseeded per user so results do not depend on evaluation order.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : seed_(seed), rng_(seed) {}
  std::string name() const override { return "Random"; }
  void begin_episode(int user) override;
  int act(const ActionMask& mask) override;
  void observe(int, double) override {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<RandomPolicy>(*this); }

 private:
  std::uint64_t seed_;
  Rng rng_;
};

/// Fixed item scores, highest first; ties go to the lowest index.
class ScorePolicy : public Policy {
 public:
  ScorePolicy(std::string name, std::vector<double> scores) : name_(std::move(name)), scores_(std::move(scores)) {}
  std::string name() const override { return name_; }
  void begin_episode(int) override {}
  int act(const ActionMask& mask) override;
  void observe(int, double) override {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ScorePolicy>(*this); }
  const std::vector<double>& scores() const { return scores_; }

 private:
  std::string name_;
  std::vector<double> scores_;
};

/// Number of ratings per item among `users`.
std::vector<double> popularity_scores(const RatingDataset& ds, std::span<const int> users);
/// Number of distinct other items co-rated with each item by at least one of `users`
/// (the size of the item's two-hop neighbourhood in the user-item bipartite graph).
std::vector<double> impact_scores(const RatingDataset& ds, std::span<const int> users);

ScorePolicy make_popular_policy(const RatingDataset& ds, std::span<const int> train_users);
ScorePolicy make_impact_policy(const RatingDataset& ds, std::span<const int> train_users);

/// Greedy on MF predictions; each observed rating moves the user vector by one SGD step.
class OnlineMfPolicy : public Policy {
 public:
  explicit OnlineMfPolicy(const MfModel& model) : model_(&model), state_(init_user_state(model.d())) {}
  std::string name() const override { return "MF"; }
  void begin_episode(int) override { state_ = init_user_state(model_->d()); }
  int act(const ActionMask& mask) override;
  void observe(int item, double reward) override { state_ = online_update(*model_, state_, item, reward); }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<OnlineMfPolicy>(*this); }
  const UserLatentState& state() const { return state_; }

 private:
  const MfModel* model_;
  UserLatentState state_;
};

/// Shared ridge regression over the context x = [cf_state; V_i] of size 2d.
struct LinUcbModel {
  Eigen::MatrixXd A;      // starts at the identity
  Eigen::MatrixXd A_inv;  // kept in sync with A
  Eigen::VectorXd b;
  double alpha_ucb = 1.0;

  static LinUcbModel fresh(int context_dim, double alpha_ucb);
  Eigen::VectorXd theta() const { return A_inv * b; }
  /// A += x x^T, b += r x
  void update(const Eigen::VectorXd& x, double reward);
  /// theta^T x + alpha * sqrt(x^T A^-1 x)
  double ucb(const Eigen::VectorXd& x) const;
  double width(const Eigen::VectorXd& x) const { return std::sqrt(x.dot(A_inv * x)); }
};

Eigen::VectorXd linucb_context(const UserLatentState& state, const MfModel& mf, int item);

class LinUcbPolicy : public Policy {
 public:
  /// With `learn` set, every observation also updates the ridge model.
  LinUcbPolicy(const MfModel& mf, LinUcbModel model, bool learn = false);
  std::string name() const override { return "LinUCB"; }
  void begin_episode(int) override { state_ = init_user_state(mf_->d()); }
  int act(const ActionMask& mask) override;
  void observe(int item, double reward) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<LinUcbPolicy>(*this); }
  const LinUcbModel& model() const { return model_; }

 private:
  void refresh_cache();

  const MfModel* mf_;
  LinUcbModel model_;
  bool learn_;
  UserLatentState state_;
  // Per-item terms that only depend on the ridge model.
  Eigen::VectorXd item_quad_;   // V_i^T M_vv V_i
  Eigen::MatrixXd cross_;       // M_sv V (d x n)
  Eigen::VectorXd item_theta_;  // theta_v^T V_i
};

struct LinUcbConfig {
  int episodes = 5000;
  int horizon = 40;
  double alpha_ucb = 1.0;
  TaskMode task = TaskMode::TaskII;
  std::uint64_t seed = 0;
};

/// Same episode scheme as CFRL: each episode picks a training user uniformly and the model
/// learns from every step.
LinUcbModel train_linucb(const RatingDataset& ds, const Split& split, const MfModel& mf, const LinUcbConfig& cfg);

void save_linucb_checkpoint(const LinUcbModel& model, const std::filesystem::path& path);
LinUcbModel load_linucb_checkpoint(const std::filesystem::path& path);

/// Greedy on a trained Q-network, tracking either the CF state or the raw rating vector.
class QPolicy : public Policy {
 public:
  /// `mf` is borrowed and must outlive the policy; may be null for raw states.
  QPolicy(std::string name, QNetwork net, const MfModel* mf, StateKind kind);
  /// Owning variant, for policies that carry their own state-update model.
  QPolicy(std::string name, QNetwork net, std::shared_ptr<const MfModel> mf, StateKind kind);
  std::string name() const override { return name_; }
  void begin_episode(int user) override;
  int act(const ActionMask& mask) override;
  void observe(int item, double reward) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<QPolicy>(*this); }
  const QNetwork& network() const { return *net_; }

 private:
  std::string name_;
  std::shared_ptr<const QNetwork> net_;  // immutable, shared by clones
  std::shared_ptr<const MfModel> mf_;
  StateKind kind_;
  UserLatentState cf_;
  std::vector<std::pair<int, double>> raw_;
};

/// DQN over raw n-dimensional rating vectors with the CFRL training scheme.
TrainResult train_raw_dqn(const RatingDataset& ds, const Split& split, const TrainConfig& cfg);

}  // namespace cfrl
