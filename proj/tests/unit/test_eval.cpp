#include <cmath>
#include <sstream>

#include "cfrl/eval.hpp"
#include "support.hpp"

using namespace cfrl;

namespace {

/// Pays a fixed reward for every step; episodes last `horizon` steps over `n` items.
class ConstantEnvironment : public EpisodeEnvironment {
 public:
  ConstantEnvironment(int n, int horizon, double reward) : n_(n), horizon_(horizon), reward_(reward) {}
  void reset(int) override {
    mask_ = ActionMask::all(n_);
    t_ = 0;
  }
  const ActionMask& mask() const override { return mask_; }
  bool done() const override { return t_ >= horizon_; }
  StepResult step(int action) override {
    mask_.remove(action);
    ++t_;
    return {reward_, done()};
  }
  std::unique_ptr<EpisodeEnvironment> clone() const override { return std::make_unique<ConstantEnvironment>(*this); }

 private:
  int n_, horizon_;
  double reward_;
  int t_ = 0;
  ActionMask mask_;
};

/// Always proposes the same item, legal or not.
class StubbornPolicy : public Policy {
 public:
  std::string name() const override { return "Stubborn"; }
  void begin_episode(int) override {}
  int act(const ActionMask&) override { return 0; }
  void observe(int, double) override {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<StubbornPolicy>(*this); }
};

RatingDataset grid_dataset() {
  std::mt19937_64 rng(77);
  std::bernoulli_distribution keep(0.5);
  std::uniform_int_distribution<int> rating(1, 5);
  std::vector<RatingRecord> records;
  for (int u = 0; u < 40; ++u) {
    for (int i = 0; i < 30; ++i) {
      if (i == u % 30 || keep(rng)) records.push_back({u, i, rating(rng), 0});
    }
  }
  return RatingDataset::from_records(records);
}

ComparisonReport stub_report(std::vector<double> a, std::vector<double> b) {
  ComparisonReport report;
  report.dataset = "Toy";
  report.horizon = 3;
  report.methods = {"A", "B"};
  report.tasks = {"TaskII"};
  report.cells = {{{make_eval_result("A", "TaskII", "Toy", std::move(a)), ""}},
                  {{make_eval_result("B", "TaskII", "Toy", std::move(b)), ""}}};
  summarize(report);
  return report;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("a constant-reward environment scores exactly that reward") {
    ConstantEnvironment env(6, 3, 2.0);
    const std::vector<int> users{0, 1, 2, 3};
    const auto outcomes = evaluate_policy(RandomPolicy(1), env, users);
    REQUIRE(outcomes.size() == 4);
    for (const auto& o : outcomes) {
      CHECK(o.rewards.size() == 3);
      CHECK(o.mean_reward() == 2.0);
    }
    CHECK(split_score(outcomes) == 2.0);
  }

  TEST_CASE("split score is the mean of per-user means") {
    std::vector<UserOutcome> outcomes{{0, {1.0, 3.0}}, {1, {5.0, 5.0, 5.0, 5.0}}};
    CHECK(split_score(outcomes) == 3.5);
  }

  TEST_CASE("illegal actions are rejected") {
    ConstantEnvironment env(4, 2, 1.0);
    CHECK_THROWS_AS(evaluate_policy(StubbornPolicy(), env, std::vector<int>{0}), IllegalActionError);
  }

  TEST_CASE("evaluation results do not depend on the number of threads") {
    const RatingDataset ds = grid_dataset();
    const auto splits = make_splits(ds, 1, 0.3, 10, 5);
    REQUIRE(!splits[0].test_users.empty());
    for (TaskMode task : {TaskMode::TaskI, TaskMode::TaskII}) {
      const auto one = evaluate_policy(RandomPolicy(9), ds, splits[0], task, 5, 1);
      const auto three = evaluate_policy(RandomPolicy(9), ds, splits[0], task, 5, 3);
      REQUIRE(one.size() == three.size());
      for (std::size_t k = 0; k < one.size(); ++k) {
        CHECK(one[k].user == three[k].user);
        CHECK(one[k].rewards == three[k].rewards);
      }
    }
  }

  TEST_CASE("summary marks best and second best with improvement and p-value") {
    const ComparisonReport report = stub_report({3.0, 3.1, 2.9, 3.0}, {4.0, 4.0, 4.1, 3.9});
    REQUIRE(report.columns.size() == 1);
    CHECK(report.columns[0].best == 1u);
    CHECK(report.columns[0].second == 0u);
    CHECK(*report.columns[0].improvement == doctest::Approx(1.0 / 3.0));
    REQUIRE(report.columns[0].p_value);
    CHECK(*report.columns[0].p_value < 0.01);

    std::ostringstream text;
    write_report_text(text, report);
    CHECK(text.str().find("4.000±0.082+") != std::string::npos);
    CHECK(text.str().find("3.000±0.082*") != std::string::npos);
    CHECK(text.str().find("33.33%") != std::string::npos);

    std::ostringstream csv;
    write_report_csv(csv, report);
    CHECK(csv.str().rfind("method,task,dataset,split,score\n", 0) == 0);
    const std::string rows = csv.str();
    CHECK(std::count(rows.begin(), rows.end(), '\n') == 9);
  }

  TEST_CASE("relative improvement arithmetic") {
    const ComparisonReport report = stub_report({2.634, 2.634}, {3.018, 3.018});
    CHECK(*report.columns[0].improvement * 100.0 == doctest::Approx(14.58).epsilon(1e-3));
    CHECK_FALSE(report.columns[0].p_value);  // constant shift: no test
  }

  TEST_CASE("benchmark grid shape, determinism and failure reporting") {
    const RatingDataset ds = grid_dataset();
    BenchmarkConfig cfg;
    cfg.dataset_name = "Grid";
    cfg.methods = {"random", "popular", "impact", "bogus"};
    cfg.n_splits = 3;
    cfg.test_fraction = 0.2;
    cfg.min_ratings = 10;
    cfg.horizon = 5;
    cfg.seed = 4;
    std::vector<std::string> messages;
    const ComparisonReport report = benchmark(ds, cfg, [&](const std::string& m) { messages.push_back(m); });
    REQUIRE(report.cells.size() == 4);
    CHECK(report.methods == std::vector<std::string>{"Random", "Popular", "Impact", "bogus"});
    CHECK(report.tasks == std::vector<std::string>{"TaskI", "TaskII"});
    for (std::size_t r = 0; r < 3; ++r) {
      REQUIRE(report.cells[r].size() == 2);
      for (const auto& cell : report.cells[r]) {
        REQUIRE(cell.result);
        CHECK(cell.result->split_scores.size() == 3);
      }
    }
    CHECK(report.any_failed());
    CHECK_FALSE(report.cells[3][0].result);
    CHECK(report.cells[3][0].error.find("unknown method") != std::string::npos);
    CHECK(!messages.empty());

    const ComparisonReport again = benchmark(ds, cfg);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 2; ++c) {
        CHECK(again.cells[r][c].result->split_scores == report.cells[r][c].result->split_scores);
      }
    }
    std::ostringstream text;
    write_report_text(text, report);
    CHECK(text.str().find("FAILED") != std::string::npos);
    CHECK(text.str().find("error: bogus/TaskI") != std::string::npos);

    cfg.methods.clear();
    CHECK_THROWS_AS(benchmark(ds, cfg), std::invalid_argument);
  }

  TEST_CASE("methods that need MF refuse to build without it") {
    const RatingDataset ds = grid_dataset();
    const auto splits = make_splits(ds, 1, 0.3, 10, 5);
    BenchmarkConfig cfg;
    for (const char* m : {"mf", "linucb", "cfrl"}) {
      CHECK_THROWS_AS(build_policy(m, ds, splits[0], nullptr, TaskMode::TaskII, cfg, 0), std::invalid_argument);
    }
  }
}
