#include "cfrl/baselines.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

#include "cfrl/binary_io.hpp"

namespace cfrl {

namespace {

constexpr std::string_view kLinUcbMagic = "CFRLLUCB";
constexpr std::uint32_t kLinUcbVersion = 1;

}  // namespace

void RandomPolicy::begin_episode(int user) {
  rng_.seed(derive_seed(seed_, "random-policy", static_cast<std::uint64_t>(user)));
}

int RandomPolicy::act(const ActionMask& mask) {
  if (mask.empty()) throw std::invalid_argument("empty action mask");
  return mask.nth(std::uniform_int_distribution<int>(0, mask.size() - 1)(rng_));
}

int ScorePolicy::act(const ActionMask& mask) {
  if (mask.empty()) throw std::invalid_argument("empty action mask");
  int best = -1;
  mask.for_each([&](int i) {
    if (best < 0 || scores_[i] > scores_[best]) best = i;
  });
  return best;
}

std::vector<double> popularity_scores(const RatingDataset& ds, std::span<const int> users) {
  std::vector<double> counts(static_cast<std::size_t>(ds.num_items()), 0.0);
  for (int u : users) {
    for (const auto& e : ds.user_ratings(u)) counts[e.item] += 1.0;
  }
  return counts;
}

std::vector<double> impact_scores(const RatingDataset& ds, std::span<const int> users) {
  const int n = ds.num_items();
  const std::size_t words = (static_cast<std::size_t>(n) + 63) / 64;
  // Two-hop reachability: OR the item bitsets of every user who rated the item.
  std::vector<std::vector<int>> raters(static_cast<std::size_t>(n));
  std::vector<std::vector<std::uint64_t>> profile_bits;
  profile_bits.reserve(users.size());
  for (std::size_t k = 0; k < users.size(); ++k) {
    std::vector<std::uint64_t> bits(words, 0);
    for (const auto& e : ds.user_ratings(users[k])) {
      bits[static_cast<std::size_t>(e.item) / 64] |= 1ull << (e.item % 64);
      raters[e.item].push_back(static_cast<int>(k));
    }
    profile_bits.push_back(std::move(bits));
  }
  std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
  std::vector<std::uint64_t> reach(words);
  for (int i = 0; i < n; ++i) {
    if (raters[i].empty()) continue;
    std::fill(reach.begin(), reach.end(), 0);
    for (int k : raters[i]) {
      for (std::size_t w = 0; w < words; ++w) reach[w] |= profile_bits[k][w];
    }
    int count = 0;
    for (auto w : reach) count += std::popcount(w);
    scores[i] = count - 1;  // the item itself is always reached
  }
  return scores;
}

ScorePolicy make_popular_policy(const RatingDataset& ds, std::span<const int> train_users) {
  return ScorePolicy("Popular", popularity_scores(ds, train_users));
}

ScorePolicy make_impact_policy(const RatingDataset& ds, std::span<const int> train_users) {
  return ScorePolicy("Impact", impact_scores(ds, train_users));
}

int OnlineMfPolicy::act(const ActionMask& mask) {
  if (mask.empty()) throw std::invalid_argument("empty action mask");
  Eigen::VectorXd scores = model_->V.transpose() * state_.vector;
  return masked_argmax(scores, mask);
}

LinUcbModel LinUcbModel::fresh(int context_dim, double alpha_ucb) {
  if (context_dim < 1) throw std::invalid_argument("context dimension must be >= 1");
  if (!(alpha_ucb > 0.0)) throw std::invalid_argument("alpha_ucb must be > 0");
  return {Eigen::MatrixXd::Identity(context_dim, context_dim), Eigen::MatrixXd::Identity(context_dim, context_dim),
          Eigen::VectorXd::Zero(context_dim), alpha_ucb};
}

void LinUcbModel::update(const Eigen::VectorXd& x, double reward) {
  A.noalias() += x * x.transpose();
  b.noalias() += reward * x;
  // Sherman-Morrison keeps A_inv current; re-symmetrize to stop drift.
  const Eigen::VectorXd Ax = A_inv * x;
  A_inv.noalias() -= (Ax * Ax.transpose()) / (1.0 + x.dot(Ax));
  A_inv = 0.5 * (A_inv + A_inv.transpose()).eval();
}

double LinUcbModel::ucb(const Eigen::VectorXd& x) const {
  return theta().dot(x) + alpha_ucb * std::sqrt(std::max(0.0, x.dot(A_inv * x)));
}

Eigen::VectorXd linucb_context(const UserLatentState& state, const MfModel& mf, int item) {
  Eigen::VectorXd x(2 * mf.d());
  x << state.vector, mf.V.col(item);
  return x;
}

LinUcbPolicy::LinUcbPolicy(const MfModel& mf, LinUcbModel model, bool learn)
    : mf_(&mf), model_(std::move(model)), learn_(learn), state_(init_user_state(mf.d())) {
  if (model_.A.rows() != 2 * mf.d()) throw std::invalid_argument("LinUCB model does not match 2d context");
  refresh_cache();
}

void LinUcbPolicy::refresh_cache() {
  const int d = mf_->d();
  const auto M_sv = model_.A_inv.topRightCorner(d, d);
  const auto M_vv = model_.A_inv.bottomRightCorner(d, d);
  cross_ = M_sv * mf_->V;
  item_quad_ = (mf_->V.array() * (M_vv * mf_->V).array()).colwise().sum().transpose();
  item_theta_ = mf_->V.transpose() * model_.theta().tail(d);
}

int LinUcbPolicy::act(const ActionMask& mask) {
  if (mask.empty()) throw std::invalid_argument("empty action mask");
  const int d = mf_->d();
  const Eigen::VectorXd& s = state_.vector;
  const double mean_s = model_.theta().head(d).dot(s);
  const double quad_s = s.dot(model_.A_inv.topLeftCorner(d, d) * s);
  const Eigen::VectorXd cross = cross_.transpose() * s;
  int best = -1;
  double best_score = 0.0;
  mask.for_each([&](int i) {
    const double quad = std::max(0.0, quad_s + 2.0 * cross[i] + item_quad_[i]);
    const double score = mean_s + item_theta_[i] + model_.alpha_ucb * std::sqrt(quad);
    if (best < 0 || score > best_score) {
      best = i;
      best_score = score;
    }
  });
  return best;
}

void LinUcbPolicy::observe(int item, double reward) {
  if (learn_) {
    model_.update(linucb_context(state_, *mf_, item), reward);
    refresh_cache();
  }
  state_ = online_update(*mf_, state_, item, reward);
}

LinUcbModel train_linucb(const RatingDataset& ds, const Split& split, const MfModel& mf, const LinUcbConfig& cfg) {
  LinUcbPolicy policy(mf, LinUcbModel::fresh(2 * mf.d(), cfg.alpha_ucb), true);
  std::vector<int> users;
  for (int u : split.train_users) {
    if (cfg.task != TaskMode::TaskI || static_cast<int>(ds.user_ratings(u).size()) >= cfg.horizon) users.push_back(u);
  }
  if (users.empty()) throw std::invalid_argument("no training user can complete an episode of this horizon");
  Rng rng(derive_seed(cfg.seed, "episode-user"));
  std::uniform_int_distribution<std::size_t> pick(0, users.size() - 1);
  for (int k = 0; k < cfg.episodes; ++k) {
    const int user = users[pick(rng)];
    auto env = RecommendationEnv::reset(ds, nullptr, user, cfg.task, cfg.horizon);
    policy.begin_episode(user);
    while (!env.done()) {
      const int item = policy.act(env.available_actions());
      policy.observe(item, env.step(item).reward);
    }
  }
  return policy.model();
}

void save_linucb_checkpoint(const LinUcbModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  binary::write_magic(out, kLinUcbMagic, kLinUcbVersion);
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(model.b.size()));
  binary::write<double>(out, model.alpha_ucb);
  binary::write_array(out, model.A.data(), static_cast<std::size_t>(model.A.size()));
  binary::write_array(out, model.b.data(), static_cast<std::size_t>(model.b.size()));
  // The running inverse is stored as well: recomputing it would perturb the scores.
  binary::write_array(out, model.A_inv.data(), static_cast<std::size_t>(model.A_inv.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

LinUcbModel load_linucb_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  if (binary::expect_magic(in, kLinUcbMagic) != kLinUcbVersion) throw binary::FormatError("unsupported LinUCB version");
  const auto dim = static_cast<Eigen::Index>(binary::read<std::uint64_t>(in));
  LinUcbModel model;
  model.alpha_ucb = binary::read<double>(in);
  model.A.resize(dim, dim);
  model.b.resize(dim);
  binary::read_array(in, model.A.data(), static_cast<std::size_t>(model.A.size()));
  binary::read_array(in, model.b.data(), static_cast<std::size_t>(model.b.size()));
  model.A_inv.resize(dim, dim);
  binary::read_array(in, model.A_inv.data(), static_cast<std::size_t>(model.A_inv.size()));
  return model;
}

QPolicy::QPolicy(std::string name, QNetwork net, const MfModel* mf, StateKind kind)
    : QPolicy(std::move(name), std::move(net), std::shared_ptr<const MfModel>(mf, [](const MfModel*) {}), kind) {}

QPolicy::QPolicy(std::string name, QNetwork net, std::shared_ptr<const MfModel> mf, StateKind kind)
    : name_(std::move(name)), net_(std::make_shared<const QNetwork>(std::move(net))), mf_(std::move(mf)), kind_(kind) {
  if (kind == StateKind::Cf) {
    if (!mf_) throw std::invalid_argument("CF states need an MF model");
    cf_ = init_user_state(mf_->d());
  }
}

void QPolicy::begin_episode(int) {
  if (kind_ == StateKind::Cf) cf_ = init_user_state(mf_->d());
  raw_.clear();
}

int QPolicy::act(const ActionMask& mask) {
  if (mask.empty()) throw std::invalid_argument("empty action mask");
  if (kind_ == StateKind::Cf) return masked_argmax(net_->forward(cf_.vector), mask);
  StateVector raw(net_->input_size());
  auto sorted = raw_;
  std::sort(sorted.begin(), sorted.end());
  for (auto [i, r] : sorted) raw.insertBack(i) = r;
  return masked_argmax(net_->forward(raw), mask);
}

void QPolicy::observe(int item, double reward) {
  if (kind_ == StateKind::Cf) {
    cf_ = online_update(*mf_, cf_, item, reward);
  } else if (reward != 0.0) {
    raw_.emplace_back(item, reward);
  }
}

TrainResult train_raw_dqn(const RatingDataset& ds, const Split& split, const TrainConfig& cfg) {
  RecommendationTrainingEnv env(ds, nullptr, split.train_users, cfg.task, cfg.horizon, StateKind::Raw);
  QLearner learner(env, cfg);
  learner.run(cfg.episodes);
  return {learner.network(), learner.log()};
}

}  // namespace cfrl
