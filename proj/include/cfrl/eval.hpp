#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfrl/agent.hpp"
#include "cfrl/baselines.hpp"
#include "cfrl/dataset.hpp"
#include "cfrl/env.hpp"
#include "cfrl/mf.hpp"

namespace cfrl {

/// Environment seen by a policy during evaluation.
class EpisodeEnvironment {
 public:
  virtual ~EpisodeEnvironment() = default;
  virtual void reset(int user) = 0;
  virtual const ActionMask& mask() const = 0;
  virtual bool done() const = 0;
  virtual StepResult step(int action) = 0;
  virtual std::unique_ptr<EpisodeEnvironment> clone() const = 0;
};

/// Logged-rating replay of one user per episode.
class LoggedRatingsEnvironment : public EpisodeEnvironment {
 public:
  LoggedRatingsEnvironment(const RatingDataset& ds, TaskMode task, int horizon)
      : ds_(&ds), task_(task), horizon_(horizon) {}
  void reset(int user) override { env_.emplace(RecommendationEnv::reset(*ds_, nullptr, user, task_, horizon_)); }
  const ActionMask& mask() const override { return env_->available_actions(); }
  bool done() const override { return env_->done(); }
  StepResult step(int action) override { return env_->step(action); }
  std::unique_ptr<EpisodeEnvironment> clone() const override {
    return std::make_unique<LoggedRatingsEnvironment>(*this);
  }

 private:
  const RatingDataset* ds_;
  TaskMode task_;
  int horizon_;
  std::optional<RecommendationEnv> env_;
};

struct UserOutcome {
  int user = 0;
  std::vector<double> rewards;
  double mean_reward() const;
};

/// One episode per user. With jobs > 1 users are spread over threads, each with its own
/// policy and environment clone; results are identical to a sequential run.
std::vector<UserOutcome> evaluate_policy(const Policy& policy, const EpisodeEnvironment& env,
                                         std::span<const int> users, int jobs = 1);
std::vector<UserOutcome> evaluate_policy(const Policy& policy, const RatingDataset& ds, const Split& split,
                                         TaskMode task, int horizon, int jobs = 1);

/// Mean over users of each user's mean reward.
double split_score(std::span<const UserOutcome> outcomes);

struct EvalResult {
  std::string method;
  std::string task;
  std::string dataset;
  std::vector<double> split_scores;
  double mean = 0.0;
  double stddev = 0.0;
};

EvalResult make_eval_result(std::string method, std::string task, std::string dataset,
                            std::vector<double> split_scores);

struct ReportCell {
  std::optional<EvalResult> result;
  std::string error;  // set when the method failed on this task
};

struct ColumnSummary {
  std::optional<std::size_t> best;    // row index
  std::optional<std::size_t> second;  // row index
  std::optional<double> p_value;      // paired t-test best vs second
  std::optional<double> improvement;  // (best - second) / second
};

struct ComparisonReport {
  std::string dataset;
  int horizon = 0;
  std::vector<std::string> methods;  // rows
  std::vector<std::string> tasks;    // columns
  std::vector<std::vector<ReportCell>> cells;  // [method][task]
  std::vector<ColumnSummary> columns;

  bool any_failed() const;
};

/// Fills the per-column best/second-best marks, p-values and improvements.
void summarize(ComparisonReport& report);

void write_report_text(std::ostream& out, const ComparisonReport& report);
void write_report_csv(std::ostream& out, const ComparisonReport& report);

inline const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> methods{"random", "popular", "impact", "mf", "linucb", "dqn", "cfrl"};
  return methods;
}

struct BenchmarkConfig {
  std::string dataset_name = "ML100K";
  std::vector<std::string> methods;
  std::vector<TaskMode> tasks{TaskMode::TaskI, TaskMode::TaskII};
  int n_splits = 10;
  double test_fraction = 0.1;
  int min_ratings = 100;
  int horizon = 40;
  MfParams mf;
  TrainConfig agent;
  LinUcbConfig linucb;
  std::uint64_t seed = 0;
  int jobs = 1;
};

using ProgressSink = std::function<void(const std::string&)>;

/// Builds the policy for `method` on one split, training it when the method learns.
/// `mf` may be null for methods that do not use it.
std::unique_ptr<Policy> build_policy(const std::string& method, const RatingDataset& ds, const Split& split,
                                     const MfModel* mf, TaskMode task, const BenchmarkConfig& cfg,
                                     std::uint64_t split_index);

/// Full methods x tasks grid over `n_splits` splits. Per-cell failures are recorded in the
/// report rather than thrown.
ComparisonReport benchmark(const RatingDataset& ds, const BenchmarkConfig& cfg, const ProgressSink& progress = {});

}  // namespace cfrl
