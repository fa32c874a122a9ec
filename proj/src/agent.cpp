#include "cfrl/agent.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "cfrl/binary_io.hpp"

namespace cfrl {

namespace {

constexpr std::string_view kTrainerMagic = "CFRLTRNR";
constexpr std::uint32_t kTrainerVersion = 1;

std::string rng_state(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream s(state);
  s >> rng;
  if (!s) throw binary::FormatError("corrupt RNG state");
}

}  // namespace

void TrainConfig::validate() const {
  if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0, 1]");
  if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) throw std::invalid_argument("epsilon_end must be in [0, 1]");
  if (epsilon_decay_episodes < 0) throw std::invalid_argument("epsilon_decay_episodes must be >= 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (mf_alpha && !(*mf_alpha > 0.0)) throw std::invalid_argument("mf_alpha must be > 0");
  if (mf_lambda && *mf_lambda < 0.0) throw std::invalid_argument("mf_lambda must be >= 0");
  if (sync_period < 1) throw std::invalid_argument("sync_period must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (replay_capacity < 1) throw std::invalid_argument("replay_capacity must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden layer sizes must be >= 1");
  }
}

double TrainConfig::epsilon_at(int episode) const {
  if (epsilon_decay_episodes <= 0 || episode >= epsilon_decay_episodes) {
    return epsilon_decay_episodes <= 0 ? epsilon : epsilon_end;
  }
  const double frac = static_cast<double>(episode) / epsilon_decay_episodes;
  return epsilon + (epsilon_end - epsilon) * frac;
}

RecommendationTrainingEnv::RecommendationTrainingEnv(const RatingDataset& ds, const MfModel* model,
                                                     std::vector<int> users, TaskMode task, int horizon,
                                                     StateKind kind)
    : ds_(&ds), model_(model), task_(task), horizon_(horizon), kind_(kind) {
  if (kind == StateKind::Cf && model == nullptr) throw std::invalid_argument("CF states need an MF model");
  for (int u : users) {
    if (task != TaskMode::TaskI || static_cast<int>(ds.user_ratings(u).size()) >= horizon) users_.push_back(u);
  }
  if (users_.empty()) throw std::invalid_argument("no training user can complete an episode of this horizon");
}

int RecommendationTrainingEnv::state_dim() const {
  return kind_ == StateKind::Cf ? model_->d() : ds_->num_items();
}

int RecommendationTrainingEnv::begin_episode(Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, users_.size() - 1);
  const int user = users_[pick(rng)];
  env_.emplace(RecommendationEnv::reset(*ds_, kind_ == StateKind::Cf ? model_ : nullptr, user, task_, horizon_));
  return user;
}

StateVector RecommendationTrainingEnv::observe() const {
  if (!env_) throw std::logic_error("no active episode");
  if (kind_ == StateKind::Raw) return env_->state().raw_state();
  return to_state_vector(env_->state().cf_state.vector);
}

const ActionMask& RecommendationTrainingEnv::mask() const {
  if (!env_) throw std::logic_error("no active episode");
  return env_->available_actions();
}

StepResult RecommendationTrainingEnv::step(int action) {
  if (!env_) throw std::logic_error("no active episode");
  return env_->step(action);
}

int select_action(const QNetwork& net, const StateVector& state, const ActionMask& mask, double epsilon, Rng& rng) {
  if (mask.empty()) throw std::invalid_argument("empty action mask");
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    return mask.nth(std::uniform_int_distribution<int>(0, mask.size() - 1)(rng));
  }
  return masked_argmax(net.forward(state), mask);
}

std::vector<int> network_layout(const TrainConfig& cfg, int input_dim, int num_actions) {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(num_actions);
  return sizes;
}

QLearner::QLearner(TrainingEnvironment& env, TrainConfig cfg)
    : QLearner(env, cfg,
               QNetwork::init(network_layout(cfg, env.state_dim(), env.num_actions()),
                              derive_seed(cfg.seed, "net-init"), cfg.activation)) {}

QLearner::QLearner(TrainingEnvironment& env, TrainConfig cfg, QNetwork initial)
    : env_(&env),
      cfg_(std::move(cfg)),
      net_(std::move(initial)),
      target_(make_target(net_)),
      memory_(cfg_.replay_capacity),
      user_rng_(derive_seed(cfg_.seed, "episode-user")),
      action_rng_(derive_seed(cfg_.seed, "epsilon-greedy")),
      sample_rng_(derive_seed(cfg_.seed, "replay-sample")) {
  cfg_.validate();
  if (net_.input_size() != env.state_dim() || net_.output_size() != env.num_actions()) {
    throw std::invalid_argument("network shape does not match the environment");
  }
}

EpisodeLog QLearner::run_episode(const TraceSink& trace) {
  EpisodeLog entry;
  entry.episode = episodes_done();
  entry.epsilon = cfg_.epsilon_at(entry.episode);
  entry.user = env_->begin_episode(user_rng_);

  StateVector state = env_->observe();
  double loss_sum = 0.0;
  int steps = 0;
  bool done = false;
  while (!done) {
    const int action = select_action(net_, state, env_->mask(), entry.epsilon, action_rng_);
    const StepResult result = env_->step(action);
    done = result.done;
    StateVector next = env_->observe();
    memory_.push({state, action, result.reward, next, done, env_->mask()});
    if (trace) trace({entry.episode, entry.user, steps, action, result.reward, done});

    const auto batch = memory_.sample(static_cast<std::size_t>(cfg_.batch_size), sample_rng_);
    loss_sum += train_step(net_, target_, batch, cfg_.gamma, cfg_.alpha);
    ++train_steps_;
    max_staleness_ = std::max(max_staleness_, target_.staleness);
    if (train_steps_ % cfg_.sync_period == 0) {
      sync_target(net_, target_);
      ++sync_count_;
    }

    entry.reward_sum += result.reward;
    state = std::move(next);
    ++steps;
  }
  entry.mean_td_loss = steps ? loss_sum / steps : 0.0;
  entry.sync_count = sync_count_;
  log_.push_back(entry);
  return entry;
}

void QLearner::run(int episodes, const TraceSink& trace) {
  for (int k = 0; k < episodes; ++k) run_episode(trace);
}

void QLearner::save_state(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write training state " + path.string());
  binary::write_magic(out, kTrainerMagic, kTrainerVersion);
  binary::write<std::int64_t>(out, train_steps_);
  binary::write<std::int64_t>(out, sync_count_);
  binary::write<std::int64_t>(out, max_staleness_);
  binary::write<std::int64_t>(out, target_.staleness);
  binary::write_string(out, rng_state(user_rng_));
  binary::write_string(out, rng_state(action_rng_));
  binary::write_string(out, rng_state(sample_rng_));
  write_qnet(out, net_);
  write_qnet(out, target_.net);
  memory_.write(out);
  binary::write<std::uint64_t>(out, log_.size());
  for (const auto& e : log_) {
    binary::write<std::int32_t>(out, e.episode);
    binary::write<std::int32_t>(out, e.user);
    binary::write<double>(out, e.reward_sum);
    binary::write<double>(out, e.mean_td_loss);
    binary::write<double>(out, e.epsilon);
    binary::write<std::int64_t>(out, e.sync_count);
  }
  if (!out) throw std::runtime_error("failed writing training state " + path.string());
}

void QLearner::load_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open training state " + path.string());
  if (binary::expect_magic(in, kTrainerMagic) != kTrainerVersion) {
    throw binary::FormatError("unsupported training state version");
  }
  train_steps_ = binary::read<std::int64_t>(in);
  sync_count_ = binary::read<std::int64_t>(in);
  max_staleness_ = binary::read<std::int64_t>(in);
  const auto staleness = binary::read<std::int64_t>(in);
  restore_rng(user_rng_, binary::read_string(in));
  restore_rng(action_rng_, binary::read_string(in));
  restore_rng(sample_rng_, binary::read_string(in));
  QNetwork net = read_qnet(in);
  QNetwork target = read_qnet(in);
  if (!net.same_architecture(net_) || !target.same_architecture(net_)) {
    throw std::invalid_argument("saved network does not match the configured architecture");
  }
  net_ = std::move(net);
  target_ = {std::move(target), staleness};
  memory_ = ReplayMemory::read(in);
  const auto rows = binary::read<std::uint64_t>(in);
  log_.clear();
  for (std::uint64_t k = 0; k < rows; ++k) {
    EpisodeLog e;
    e.episode = binary::read<std::int32_t>(in);
    e.user = binary::read<std::int32_t>(in);
    e.reward_sum = binary::read<double>(in);
    e.mean_td_loss = binary::read<double>(in);
    e.epsilon = binary::read<double>(in);
    e.sync_count = binary::read<std::int64_t>(in);
    log_.push_back(e);
  }
}

MfModel state_update_model(const MfModel& model, const TrainConfig& cfg) {
  MfModel copy = model;
  if (cfg.mf_alpha) copy.alpha = *cfg.mf_alpha;
  if (cfg.mf_lambda) copy.lambda = *cfg.mf_lambda;
  return copy;
}

TrainResult train_cfrl(const RatingDataset& ds, const Split& split, const MfModel& mf, const TrainConfig& cfg) {
  const MfModel model = state_update_model(mf, cfg);
  RecommendationTrainingEnv env(ds, &model, split.train_users, cfg.task, cfg.horizon, StateKind::Cf);
  QLearner learner(env, cfg);
  learner.run(cfg.episodes);
  return {learner.network(), learner.log()};
}

std::vector<double> run_episode_greedy(const QNetwork& net, const RatingDataset& ds, const MfModel* mf, int user,
                                       TaskMode task, int horizon, StateKind kind) {
  if (kind == StateKind::Cf && mf == nullptr) throw std::invalid_argument("CF states need an MF model");
  auto env = RecommendationEnv::reset(ds, kind == StateKind::Cf ? mf : nullptr, user, task, horizon);
  std::vector<double> rewards;
  rewards.reserve(static_cast<std::size_t>(horizon));
  while (!env.done()) {
    StateVector state = kind == StateKind::Cf ? to_state_vector(env.state().cf_state.vector) : env.state().raw_state();
    const int action = masked_argmax(net.forward(state), env.available_actions());
    rewards.push_back(env.step(action).reward);
  }
  return rewards;
}

void write_training_log(std::ostream& out, const std::vector<EpisodeLog>& log) {
  out << "episode,user,reward_sum,mean_td_loss,epsilon,sync_count\n";
  out << std::setprecision(17);
  for (const auto& e : log) {
    out << e.episode << ',' << e.user << ',' << e.reward_sum << ',' << e.mean_td_loss << ',' << e.epsilon << ','
        << e.sync_count << '\n';
  }
}

void write_trace_header(std::ostream& out) { out << "episode,user,t,action,reward,done\n"; }

void write_trace_row(std::ostream& out, const TraceRow& row) {
  out << row.episode << ',' << row.user << ',' << row.t << ',' << row.action << ',' << std::setprecision(17)
      << row.reward << ',' << (row.done ? 1 : 0) << '\n';
}

}  // namespace cfrl
