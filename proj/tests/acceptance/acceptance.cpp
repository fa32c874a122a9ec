// Acceptance checks: one PASS/FAIL line per criterion. Pass criterion numbers as arguments
// to run a subset. Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../common/checks.hpp"
#include "../common/fixtures.hpp"
#include "cfrl/agent.hpp"
#include "cfrl/baselines.hpp"
#include "cfrl/config.hpp"
#include "cfrl/dataset.hpp"
#include "cfrl/eval.hpp"
#include "cfrl/mf.hpp"
#include "cfrl/qnet.hpp"

using namespace cfrl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

const RatingDataset& ml100k() {
  static const RatingDataset ds = [] {
    if (!std::filesystem::exists(CFRL_ML100K_PATH)) {
      throw std::runtime_error("MovieLens 100K not found at " CFRL_ML100K_PATH " (run scripts/fetch_ml100k.sh)");
    }
    return load_ratings(CFRL_ML100K_PATH, RatingFormat::TabSeparated);
  }();
  return ds;
}

/// Ten-split average of one method on one task with the default settings.
double ten_split_mean(const std::string& method, TaskMode task, std::vector<double>* scores = nullptr) {
  BenchmarkConfig cfg;
  cfg.methods = {method};
  cfg.tasks = {task};
  const ComparisonReport report = benchmark(ml100k(), cfg);
  const ReportCell& cell = report.cells.at(0).at(0);
  if (!cell.result) throw std::runtime_error(method + " failed: " + cell.error);
  if (scores) *scores = cell.result->split_scores;
  return cell.result->mean;
}

Outcome near_published(const std::string& method, TaskMode task, double target, double tolerance,
                       double time_limit = 0.0) {
  const auto start = Clock::now();
  const double value = ten_split_mean(method, task);
  const double elapsed = seconds_since(start);
  const bool close = std::fabs(value - target) <= tolerance;
  const bool fast = time_limit <= 0.0 || elapsed < time_limit;
  std::string detail = "10-split mean " + fmt(value) + " (expected " + fmt(target) + " ± " + fmt(tolerance, 2) + ")";
  detail += ", " + fmt(elapsed, 1) + " s";
  if (time_limit > 0.0) detail += " (limit " + fmt(time_limit, 0) + " s)";
  return {close && fast, detail};
}

Outcome criterion_random_task1() { return near_published("random", TaskMode::TaskI, 3.513, 0.10, 60.0); }

Outcome criterion_random_task2() { return near_published("random", TaskMode::TaskII, 0.454, 0.10); }

Outcome criterion_popular_task2() {
  std::vector<double> first, second;
  const double value = ten_split_mean("popular", TaskMode::TaskII, &first);
  ten_split_mean("popular", TaskMode::TaskII, &second);
  const bool close = std::fabs(value - 2.404) <= 0.15;
  const bool same = first == second;
  return {close && same, "10-split mean " + fmt(value) + " (expected 2.404 ± 0.15), rerun " +
                             (same ? "identical" : "DIFFERENT")};
}

Outcome criterion_mf_task1() {
  const double value = ten_split_mean("mf", TaskMode::TaskI);
  return {value >= 3.95, "10-split mean " + fmt(value) + " (needs >= 3.95)"};
}

Outcome criterion_cfrl_vs_dqn() {
  RunConfig run = load_run_config(CFRL_DESK_CONFIG);
  run.dataset_path = CFRL_ML100K_PATH;
  run.split_index = 0;
  const BenchmarkConfig cfg = run.benchmark_config();
  const RatingDataset& ds = ml100k();
  const auto splits = make_splits(ds, cfg.n_splits, cfg.test_fraction, cfg.min_ratings, derive_seed(cfg.seed, "splits"));
  const Split& split = splits.at(0);
  const MfModel mf = pretrain(ds, split.train_users, cfg.mf, derive_seed(cfg.seed, "mf-init", 0)).model;
  auto score = [&](const std::string& method) {
    const auto start = Clock::now();
    const auto policy = build_policy(method, ds, split, &mf, TaskMode::TaskII, cfg, 0);
    const double s = split_score(evaluate_policy(*policy, ds, split, TaskMode::TaskII, cfg.horizon, cfg.jobs));
    std::cerr << "  " << method << " TaskII split 0: " << fmt(s) << " (" << fmt(seconds_since(start), 0) << " s)\n";
    return s;
  };
  const double cfrl = score("cfrl");
  const double dqn = score("dqn");
  return {cfrl >= 2.6 && cfrl >= dqn + 0.5, "CFRL " + fmt(cfrl) + " vs DQN " + fmt(dqn) + " (needs CFRL >= 2.6 and >= DQN + 0.5; K=" +
                                                std::to_string(cfg.agent.episodes) + ", split 0)"};
}

Outcome criterion_gradients() {
  const auto start = Clock::now();
  const checks::GradientCheck mf = checks::mf_gradient_check(100, 2024);
  const checks::GradientCheck q = checks::qnet_gradient_check(100, 31337);
  const double elapsed = seconds_since(start);
  const bool ok = mf.instances == 100 && q.instances == 100 && mf.worst < 1e-4 && q.worst < 1e-4 && elapsed < 30.0;
  std::ostringstream s;
  s << "worst relative error MF " << std::scientific << std::setprecision(2) << mf.worst << " over " << mf.parameters
    << " parameters, Q-net " << q.worst << " over " << q.parameters << " parameters (limit 1e-4); "
    << std::fixed << std::setprecision(1) << elapsed << " s";
  return {ok, s.str()};
}

Outcome criterion_toy_mdp() {
  const auto start = Clock::now();
  fixtures::ToyMdpEnv env;
  const TrainConfig cfg = fixtures::toy_config();
  QLearner learner(env, cfg);
  learner.run(cfg.episodes);
  const auto q_star = fixtures::toy_value_iteration(cfg.gamma);
  double worst = 0.0;
  bool optimal = true;
  for (int s = 0; s < fixtures::ToyMdp::kStates; ++s) {
    const Eigen::VectorXd q = learner.network().forward(fixtures::toy_state(s));
    for (int a = 0; a < fixtures::ToyMdp::kActions; ++a) worst = std::max(worst, std::fabs(q[a] - q_star[s][a]));
    const int best = q_star[s][1] > q_star[s][0] ? 1 : 0;
    optimal = optimal && masked_argmax(q, ActionMask::all(2)) == best;
  }
  const double elapsed = seconds_since(start);
  std::ostringstream s;
  s << "max |Q - Q*| " << std::scientific << std::setprecision(2) << worst << " (limit 1e-2), greedy policy "
    << (optimal ? "optimal" : "NOT optimal") << ", " << std::fixed << std::setprecision(2) << elapsed << " s";
  return {worst < 1e-2 && optimal && elapsed < 10.0, s.str()};
}

Outcome criterion_environment() {
  const RatingDataset& ds = ml100k();
  const auto splits = make_splits(ds, 10, 0.1, 100, derive_seed(0, "splits"));
  const MfModel mf = pretrain(ds, splits[0].train_users, MfParams{}, derive_seed(0, "mf-init", 0)).model;
  std::vector<int> users(static_cast<std::size_t>(ds.num_users()));
  std::iota(users.begin(), users.end(), 0);
  std::string violation = checks::environment_property_violation(ds, mf, users, 400, 40, 7);
  if (!violation.empty()) return {false, violation};
  // Every test candidate can play a full TaskI episode.
  for (int u : test_candidates(ds, 100)) {
    if (static_cast<int>(ds.user_ratings(u).size()) < 40) return {false, "test user with fewer than 40 ratings"};
  }
  return {true, "400 random ML100K episodes (TaskI and TaskII, T<=40): no repeats, mask shrinks by 1, "
                "TaskII pays 0 off-log, replay bit-exact"};
}

Outcome criterion_planted() {
  const auto start = Clock::now();
  const RatingDataset ds = fixtures::planted_dataset();
  const int planted = ds.item_index(fixtures::kPlantedItemId);
  Split split;
  for (int u = 0; u < ds.num_users(); ++u) split.train_users.push_back(u);
  const MfModel mf = pretrain(ds, split.train_users, fixtures::planted_mf_params(), 3).model;
  const TrainConfig cfg = fixtures::planted_config();
  const TrainResult cf = train_cfrl(ds, split, mf, cfg);
  const TrainResult raw = train_raw_dqn(ds, split, cfg);
  const MfModel online = state_update_model(mf, cfg);
  int cf_hits = 0, raw_hits = 0;
  for (int u = 0; u < ds.num_users(); ++u) {
    QPolicy cf_policy("CFRL", cf.network, &online, StateKind::Cf);
    cf_policy.begin_episode(u);
    cf_hits += cf_policy.act(ActionMask::all(ds.num_items())) == planted;
    QPolicy raw_policy("DQN", raw.network, nullptr, StateKind::Raw);
    raw_policy.begin_episode(u);
    raw_hits += raw_policy.act(ActionMask::all(ds.num_items())) == planted;
  }
  const double elapsed = seconds_since(start);
  return {cf_hits == ds.num_users() && raw_hits == ds.num_users() && elapsed < 60.0,
          "planted item first for " + std::to_string(cf_hits) + "/5 users (CFRL), " + std::to_string(raw_hits) +
              "/5 users (DQN), " + fmt(elapsed, 1) + " s"};
}

/// Median seconds per update of a network with the given hidden width on CF-sized states.
double seconds_per_step(int hidden) {
  constexpr int d = 16, n = 1682, steps = 300, repeats = 5;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::uniform_int_distribution<int> item(0, n - 1);
  ReplayMemory memory(2000);
  for (int k = 0; k < 2000; ++k) {
    Transition tr;
    tr.state = to_state_vector(Eigen::VectorXd::NullaryExpr(d, [&] { return noise(rng); }));
    tr.next_state = to_state_vector(Eigen::VectorXd::NullaryExpr(d, [&] { return noise(rng); }));
    tr.action = item(rng);
    tr.reward = k % 6;
    tr.done = k % 40 == 39;
    tr.next_mask = ActionMask::all(n);
    tr.next_mask.remove(tr.action);
    memory.push(std::move(tr));
  }
  QNetwork net = QNetwork::init({d, hidden, n}, 1);
  TargetNetwork target = make_target(net);
  Rng sample_rng(3);
  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    for (int k = 0; k < steps; ++k) train_step(net, target, memory.sample(32, sample_rng), 0.9, 1e-4);
    times.push_back(seconds_since(start) / steps);
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

Outcome criterion_scaling() {
  const std::size_t small = QNetwork::init({16, 64, 1682}, 1).parameter_count();
  const std::size_t large = QNetwork::init({16, 128, 1682}, 1).parameter_count();
  const double t_small = seconds_per_step(64);
  const double t_large = seconds_per_step(128);
  const double ratio = t_large / t_small;
  std::ostringstream s;
  s << "parameters " << small << " -> " << large << " (x" << std::setprecision(3) << double(large) / small
    << "), time per update " << std::fixed << std::setprecision(3) << t_small * 1e3 << " ms -> " << t_large * 1e3
    << " ms (x" << std::setprecision(2) << ratio << ", limit 2.5)";
  return {ratio <= 2.5, s.str()};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "Random TaskI on ML100K near 3.513 within a minute", criterion_random_task1},
      {2, "Random TaskII on ML100K near 0.454", criterion_random_task2},
      {3, "Popular TaskII on ML100K near 2.404, deterministic", criterion_popular_task2},
      {4, "MF TaskI on ML100K at least 3.95", criterion_mf_task1},
      {5, "CFRL TaskII beats raw DQN by 0.5 and reaches 2.6", criterion_cfrl_vs_dqn},
      {6, "MF and Q-network gradients match finite differences", criterion_gradients},
      {7, "Toy MDP values match value iteration", criterion_toy_mdp},
      {8, "Environment invariants on ML100K", criterion_environment},
      {9, "Planted optimum recommended first", criterion_planted},
      {10, "Doubling the Q-network at most 2.5x slower per update", criterion_scaling},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
