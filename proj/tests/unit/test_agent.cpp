#include <cmath>
#include <map>
#include <sstream>

#include "../common/fixtures.hpp"
#include "cfrl/agent.hpp"
#include "cfrl/baselines.hpp"
#include "support.hpp"

using namespace cfrl;
using cfrl::testing::TempDir;

namespace {

Transition tagged(int tag) {
  Transition tr;
  tr.state = fixtures::toy_state(0);
  tr.action = tag;
  tr.next_state = fixtures::toy_state(1);
  tr.next_mask = ActionMask::all(2);
  return tr;
}

RatingDataset small_dataset() {
  return cfrl::testing::make_dataset({{1, 1, 5}, {1, 2, 3}, {1, 3, 4}, {2, 1, 2}, {2, 3, 5}, {2, 4, 1},
                                      {3, 2, 4}, {3, 4, 2}, {3, 5, 5}, {4, 1, 1}, {4, 5, 3}, {4, 6, 4}});
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.episodes = 20;
  cfg.horizon = 3;
  cfg.hidden = {8};
  cfg.batch_size = 4;
  cfg.sync_period = 7;
  cfg.alpha = 0.01;
  cfg.epsilon = 0.5;
  cfg.epsilon_end = 0.5;
  cfg.task = TaskMode::TaskII;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_SUITE("agent") {
  TEST_CASE("replay memory evicts the oldest entry first") {
    ReplayMemory mem(3);
    for (int k = 0; k < 5; ++k) mem.push(tagged(k));
    REQUIRE(mem.size() == 3);
    CHECK(mem.at(0).action == 2);
    CHECK(mem.at(1).action == 3);
    CHECK(mem.at(2).action == 4);
    CHECK_THROWS_AS(ReplayMemory(0), std::invalid_argument);
  }

  TEST_CASE("replay memory stays bounded over a million pushes") {
    ReplayMemory mem(10);
    for (int k = 0; k < 1000000; ++k) mem.push(tagged(k));
    CHECK(mem.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(mem.at(static_cast<std::size_t>(i)).action == 999990 + i);
  }

  TEST_CASE("replay sampling is uniform, seeded and handles small buffers") {
    ReplayMemory mem(10);
    for (int k = 0; k < 10; ++k) mem.push(tagged(k));
    Rng rng(123);
    std::map<int, int> counts;
    constexpr int draws = 100000;
    for (int k = 0; k < draws; ++k) ++counts[mem.sample(1, rng)[0].action];
    for (int a = 0; a < 10; ++a) CHECK(std::fabs(counts[a] / static_cast<double>(draws) - 0.1) < 0.01);

    // Without replacement once the buffer holds a full batch.
    const auto batch = mem.sample(10, rng);
    std::vector<int> seen;
    for (const auto& tr : batch) seen.push_back(tr.action);
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());

    ReplayMemory one(5);
    one.push(tagged(42));
    const auto four = one.sample(4, rng);
    REQUIRE(four.size() == 4);
    for (const auto& tr : four) CHECK(tr.action == 42);

    Rng a(7), b(7);
    const auto sa = mem.sample(5, a);
    const auto sb = mem.sample(5, b);
    for (std::size_t k = 0; k < 5; ++k) CHECK(sa[k].action == sb[k].action);
    ReplayMemory empty(4);
    CHECK_THROWS(empty.sample(1, rng));
  }

  TEST_CASE("replay memory serialization round-trips") {
    ReplayMemory mem(4);
    for (int k = 0; k < 6; ++k) {
      Transition tr = tagged(k);
      tr.reward = 0.5 * k;
      tr.done = k % 2 == 0;
      mem.push(tr);
    }
    std::stringstream buf;
    mem.write(buf);
    const ReplayMemory back = ReplayMemory::read(buf);
    REQUIRE(back.size() == mem.size());
    CHECK(back.capacity() == mem.capacity());
    for (std::size_t i = 0; i < mem.size(); ++i) {
      CHECK(back.at(i).action == mem.at(i).action);
      CHECK(back.at(i).reward == mem.at(i).reward);
      CHECK(back.at(i).done == mem.at(i).done);
      CHECK(back.at(i).next_mask == mem.at(i).next_mask);
      CHECK(Eigen::VectorXd(back.at(i).state) == Eigen::VectorXd(mem.at(i).state));
    }
    // Pushing continues the FIFO order after a reload.
    std::stringstream again_buf;
    mem.write(again_buf);
    ReplayMemory again = ReplayMemory::read(again_buf);
    again.push(tagged(100));
    CHECK(again.at(0).action == 3);
    CHECK(again.at(3).action == 100);
  }

  TEST_CASE("epsilon-greedy selection") {
    QNetwork net = QNetwork::init({2, 4}, 1);
    net.layers()[0].weights.setZero();
    net.layers()[0].bias << 1.0, 3.0, 3.0, 2.0;
    const StateVector s2 = to_state_vector(Eigen::VectorXd::Zero(2));
    Rng rng(5);
    CHECK(select_action(net, s2, ActionMask::all(4), 0.0, rng) == 1);  // tie between 1 and 2
    CHECK(select_action(net, s2, ActionMask::of(4, {0, 2, 3}), 0.0, rng) == 2);
    CHECK(select_action(net, s2, ActionMask::of(4, {0, 3}), 0.0, rng) == 3);

    std::map<int, int> counts;
    constexpr int draws = 40000;
    for (int k = 0; k < draws; ++k) ++counts[select_action(net, s2, ActionMask::all(4), 1.0, rng)];
    for (int a = 0; a < 4; ++a) CHECK(std::fabs(counts[a] / static_cast<double>(draws) - 0.25) < 0.01);

    const ActionMask partial = ActionMask::of(4, {1, 3});
    for (int k = 0; k < 1000; ++k) CHECK(partial.contains(select_action(net, s2, partial, 0.7, rng)));
    CHECK_THROWS_AS(select_action(net, s2, ActionMask::of(4, {}), 0.5, rng), std::invalid_argument);
  }

  TEST_CASE("epsilon schedule") {
    TrainConfig cfg;
    cfg.epsilon = 1.0;
    cfg.epsilon_end = 0.1;
    cfg.epsilon_decay_episodes = 10;
    CHECK(cfg.epsilon_at(0) == 1.0);
    CHECK(cfg.epsilon_at(5) == doctest::Approx(0.55));
    CHECK(cfg.epsilon_at(10) == 0.1);
    CHECK(cfg.epsilon_at(1000) == 0.1);
    cfg.epsilon_decay_episodes = 0;
    CHECK(cfg.epsilon_at(1000) == 1.0);
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }

  TEST_CASE("training bookkeeping: K = 0, log rows, sync cadence and staleness") {
    const RatingDataset ds = small_dataset();
    const auto users = cfrl::testing::all_users(ds);
    RecommendationTrainingEnv env(ds, nullptr, users, TaskMode::TaskII, 3, StateKind::Raw);
    TrainConfig cfg = small_config();

    QLearner idle(env, cfg);
    const auto initial = idle.network().flat_parameters();
    idle.run(0);
    CHECK(idle.network().flat_parameters() == initial);
    CHECK(idle.log().empty());

    QLearner learner(env, cfg);
    learner.run(cfg.episodes);
    CHECK(learner.log().size() == static_cast<std::size_t>(cfg.episodes));
    CHECK(learner.train_steps() == cfg.episodes * cfg.horizon);
    CHECK(learner.sync_count() == learner.train_steps() / cfg.sync_period);
    CHECK(learner.max_staleness() <= cfg.sync_period);
    CHECK(learner.max_staleness() == cfg.sync_period);
    for (std::size_t k = 0; k < learner.log().size(); ++k) {
      CHECK(learner.log()[k].episode == static_cast<int>(k));
      CHECK(learner.log()[k].sync_count == (static_cast<std::int64_t>(k) + 1) * cfg.horizon / cfg.sync_period);
    }
    CHECK(learner.network().flat_parameters() != initial);
  }

  TEST_CASE("TaskI training pool drops users who cannot fill the horizon") {
    const RatingDataset ds = small_dataset();
    RecommendationTrainingEnv env(ds, nullptr, cfrl::testing::all_users(ds), TaskMode::TaskI, 3, StateKind::Raw);
    CHECK(env.users().size() == 4);
    CHECK_THROWS_AS(
        RecommendationTrainingEnv(ds, nullptr, cfrl::testing::all_users(ds), TaskMode::TaskI, 4, StateKind::Raw),
        std::invalid_argument);
    CHECK_THROWS_AS(RecommendationTrainingEnv(ds, nullptr, {0}, TaskMode::TaskII, 3, StateKind::Cf),
                    std::invalid_argument);
  }

  TEST_CASE("greedy rollouts") {
    const RatingDataset ds = small_dataset();
    QNetwork zero = QNetwork::init({ds.num_items(), 4, ds.num_items()}, 1);
    zero.set_flat_parameters(std::vector<double>(zero.parameter_count(), 0.0));
    // An all-zero network walks the catalogue in index order.
    const auto rewards = run_episode_greedy(zero, ds, nullptr, 0, TaskMode::TaskII, 4, StateKind::Raw);
    REQUIRE(rewards.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(rewards[static_cast<std::size_t>(i)] == ds.rating(0, i));

    const QNetwork net = QNetwork::init({ds.num_items(), 4, ds.num_items()}, 3);
    CHECK(run_episode_greedy(net, ds, nullptr, 1, TaskMode::TaskII, 5, StateKind::Raw) ==
          run_episode_greedy(net, ds, nullptr, 1, TaskMode::TaskII, 5, StateKind::Raw));
    CHECK_THROWS_AS(run_episode_greedy(net, ds, nullptr, 1, TaskMode::TaskII, 5, StateKind::Cf),
                    std::invalid_argument);
  }

  TEST_CASE("toy MDP: learned values match value iteration and the greedy policy is optimal") {
    fixtures::ToyMdpEnv env;
    const TrainConfig cfg = fixtures::toy_config();
    QLearner learner(env, cfg);
    learner.run(cfg.episodes);
    const auto q_star = fixtures::toy_value_iteration(cfg.gamma);
    CHECK(q_star[0][0] == doctest::Approx(1.9));
    CHECK(q_star[0][1] == doctest::Approx(4.5));
    double worst = 0.0;
    for (int s = 0; s < fixtures::ToyMdp::kStates; ++s) {
      const Eigen::VectorXd q = learner.network().forward(fixtures::toy_state(s));
      for (int a = 0; a < fixtures::ToyMdp::kActions; ++a) worst = std::max(worst, std::fabs(q[a] - q_star[s][a]));
      const int greedy = masked_argmax(q, ActionMask::all(2));
      const int best = q_star[s][1] > q_star[s][0] ? 1 : 0;
      CHECK(greedy == best);
    }
    MESSAGE("max |Q - Q*| = " << worst);
    CHECK(worst < 1e-2);
  }

  TEST_CASE("planted optimum is recommended first by both learners") {
    const RatingDataset ds = fixtures::planted_dataset();
    const int planted = ds.item_index(fixtures::kPlantedItemId);
    REQUIRE(planted != 0);  // a do-nothing network would pick index 0
    Split split;
    split.train_users = cfrl::testing::all_users(ds);
    const MfModel mf = pretrain(ds, split.train_users, fixtures::planted_mf_params(), 3).model;
    const TrainConfig cfg = fixtures::planted_config();

    const TrainResult cf = train_cfrl(ds, split, mf, cfg);
    const MfModel online = state_update_model(mf, cfg);
    const TrainResult raw = train_raw_dqn(ds, split, cfg);
    for (int u = 0; u < ds.num_users(); ++u) {
      QPolicy cf_policy("CFRL", cf.network, &online, StateKind::Cf);
      cf_policy.begin_episode(u);
      CHECK(cf_policy.act(ActionMask::all(ds.num_items())) == planted);
      QPolicy raw_policy("DQN", raw.network, nullptr, StateKind::Raw);
      raw_policy.begin_episode(u);
      CHECK(raw_policy.act(ActionMask::all(ds.num_items())) == planted);
      CHECK(run_episode_greedy(cf.network, ds, &online, u, TaskMode::TaskII, cfg.horizon).front() == 5.0);
      CHECK(run_episode_greedy(raw.network, ds, nullptr, u, TaskMode::TaskII, cfg.horizon, StateKind::Raw).front() == 5.0);
    }
  }

  TEST_CASE("resuming from a saved state reproduces an uninterrupted run bit for bit") {
    const RatingDataset ds = small_dataset();
    const auto users = cfrl::testing::all_users(ds);
    const MfModel mf = pretrain(ds, users, {3, 0.5, 0.05, 20}, 1).model;
    RecommendationTrainingEnv env(ds, &mf, users, TaskMode::TaskII, 3, StateKind::Cf);
    const TrainConfig cfg = small_config();
    TempDir dir("resume");

    QLearner straight(env, cfg);
    straight.run(20);

    QLearner first(env, cfg);
    first.run(9);
    first.save_state(dir / "state.bin");
    QLearner second(env, cfg);
    second.load_state(dir / "state.bin");
    CHECK(second.episodes_done() == 9);
    second.run(11);

    CHECK(second.network().flat_parameters() == straight.network().flat_parameters());
    CHECK(second.target().net.flat_parameters() == straight.target().net.flat_parameters());
    CHECK(second.train_steps() == straight.train_steps());
    CHECK(second.sync_count() == straight.sync_count());
    REQUIRE(second.log().size() == straight.log().size());
    for (std::size_t k = 0; k < straight.log().size(); ++k) {
      CHECK(second.log()[k].user == straight.log()[k].user);
      CHECK(second.log()[k].reward_sum == straight.log()[k].reward_sum);
      CHECK(second.log()[k].mean_td_loss == straight.log()[k].mean_td_loss);
    }

    TrainConfig wider = cfg;
    wider.hidden = {9};
    QLearner mismatched(env, wider);
    CHECK_THROWS_AS(mismatched.load_state(dir / "state.bin"), std::invalid_argument);
  }
}
