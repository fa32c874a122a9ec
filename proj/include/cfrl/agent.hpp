#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cfrl/dataset.hpp"
#include "cfrl/env.hpp"
#include "cfrl/mf.hpp"
#include "cfrl/qnet.hpp"
#include "cfrl/replay.hpp"
#include "cfrl/seeds.hpp"

namespace cfrl {

/// What the Q-network sees: the MF latent user vector (CFRL) or the raw n-dim rating vector (DQN).
enum class StateKind { Cf, Raw };

struct TrainConfig {
  int episodes = 20000;  // K
  int horizon = 40;      // T
  double gamma = 0.9;
  double epsilon = 0.1;
  // Linear decay from `epsilon` to `epsilon_end` over the first `epsilon_decay_episodes`
  // episodes; 0 keeps epsilon constant.
  double epsilon_end = 0.1;
  int epsilon_decay_episodes = 0;
  double alpha = 0.001;  // Q-network learning rate
  // Online CF-state update parameters; unset means the pretrained model's alpha and lambda.
  std::optional<double> mf_alpha;
  std::optional<double> mf_lambda;
  int sync_period = 500;  // L
  int batch_size = 32;
  std::size_t replay_capacity = 100000;
  std::vector<int> hidden = {64};
  Activation activation = Activation::Relu;
  TaskMode task = TaskMode::TaskII;
  std::uint64_t seed = 0;

  void validate() const;
  double epsilon_at(int episode) const;
};

/// Episodic environment driven by the Q-learning loop.
class TrainingEnvironment {
 public:
  virtual ~TrainingEnvironment() = default;
  virtual int state_dim() const = 0;
  virtual int num_actions() const = 0;
  /// Starts a new episode and returns an identifier for logs (the user index for recommendation).
  virtual int begin_episode(Rng& rng) = 0;
  virtual StateVector observe() const = 0;
  virtual const ActionMask& mask() const = 0;
  virtual StepResult step(int action) = 0;
};

/// The CF-based MDP over a pool of users: each episode picks one user uniformly.
class RecommendationTrainingEnv : public TrainingEnvironment {
 public:
  /// In TaskI, users with fewer rated items than the horizon cannot finish an episode and are
  /// dropped from the pool. `model` may be null only for StateKind::Raw.
  RecommendationTrainingEnv(const RatingDataset& ds, const MfModel* model, std::vector<int> users, TaskMode task,
                            int horizon, StateKind kind);

  int state_dim() const override;
  int num_actions() const override { return ds_->num_items(); }
  int begin_episode(Rng& rng) override;
  StateVector observe() const override;
  const ActionMask& mask() const override;
  StepResult step(int action) override;

  const std::vector<int>& users() const { return users_; }
  const RecommendationEnv& current() const { return *env_; }

 private:
  const RatingDataset* ds_;
  const MfModel* model_;
  std::vector<int> users_;
  TaskMode task_;
  int horizon_;
  StateKind kind_;
  std::optional<RecommendationEnv> env_;
};

/// Epsilon-greedy over the mask: uniform with probability epsilon, else the masked argmax of
/// the network's Q values with ties to the lowest index.
int select_action(const QNetwork& net, const StateVector& state, const ActionMask& mask, double epsilon, Rng& rng);

struct EpisodeLog {
  int episode = 0;
  int user = 0;
  double reward_sum = 0.0;
  double mean_td_loss = 0.0;
  double epsilon = 0.0;
  std::int64_t sync_count = 0;
};

struct TraceRow {
  int episode = 0;
  int user = 0;
  int t = 0;
  int action = 0;
  double reward = 0.0;
  bool done = false;
};

using TraceSink = std::function<void(const TraceRow&)>;

/// Q-learning with experience replay and a target network. One minibatch update per
/// environment step; the target is synced every `sync_period` updates.
class QLearner {
 public:
  QLearner(TrainingEnvironment& env, TrainConfig cfg);
  /// Starts from a given network instead of a freshly initialized one.
  QLearner(TrainingEnvironment& env, TrainConfig cfg, QNetwork initial);

  EpisodeLog run_episode(const TraceSink& trace = {});
  void run(int episodes, const TraceSink& trace = {});

  const QNetwork& network() const { return net_; }
  const TargetNetwork& target() const { return target_; }
  const ReplayMemory& memory() const { return memory_; }
  const std::vector<EpisodeLog>& log() const { return log_; }
  const TrainConfig& config() const { return cfg_; }
  int episodes_done() const { return static_cast<int>(log_.size()); }
  std::int64_t train_steps() const { return train_steps_; }
  std::int64_t sync_count() const { return sync_count_; }
  /// Largest target staleness observed right before a sync or at the end of a step.
  std::int64_t max_staleness() const { return max_staleness_; }

  /// Full resumable state: networks, replay memory, RNG streams, counters and log.
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  TrainingEnvironment* env_;
  TrainConfig cfg_;
  QNetwork net_;
  TargetNetwork target_;
  ReplayMemory memory_;
  Rng user_rng_;
  Rng action_rng_;
  Rng sample_rng_;
  std::int64_t train_steps_ = 0;
  std::int64_t sync_count_ = 0;
  std::int64_t max_staleness_ = 0;
  std::vector<EpisodeLog> log_;
};

struct TrainResult {
  QNetwork network;
  std::vector<EpisodeLog> log;
};

/// Layer sizes [input, hidden..., n] for a state kind.
std::vector<int> network_layout(const TrainConfig& cfg, int input_dim, int num_actions);

/// Model copy whose online-update alpha/lambda follow the config overrides.
MfModel state_update_model(const MfModel& model, const TrainConfig& cfg);

/// The CFRL learner: CF states from `mf`, trained over the split's training users.
TrainResult train_cfrl(const RatingDataset& ds, const Split& split, const MfModel& mf, const TrainConfig& cfg);

/// Rewards of a greedy (epsilon = 0) rollout for one user.
std::vector<double> run_episode_greedy(const QNetwork& net, const RatingDataset& ds, const MfModel* mf, int user,
                                       TaskMode task, int horizon, StateKind kind = StateKind::Cf);

void write_training_log(std::ostream& out, const std::vector<EpisodeLog>& log);
void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const TraceRow& row);

}  // namespace cfrl
