#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "cfrl/agent.hpp"
#include "cfrl/baselines.hpp"
#include "cfrl/binary_io.hpp"
#include "cfrl/config.hpp"
#include "cfrl/dataset.hpp"
#include "cfrl/eval.hpp"
#include "cfrl/mf.hpp"
#include "cfrl/qnet.hpp"

namespace fs = std::filesystem;
using namespace cfrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMethodFailure = 1;
constexpr int kExitUsage = 2;

// Bad arguments, configuration or input files: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> jobs;
};

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path.string());
}

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config.empty()) {
    require_file(g.config, "config file");
    cfg = load_run_config(g.config);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.jobs) cfg.jobs = *g.jobs;
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const GlobalOptions& g) {
  fs::path out(g.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw UsageError("cannot create output directory " + out.string());
  return out;
}

std::string config_text(const RunConfig& cfg) {
  std::ostringstream s;
  write_run_config(s, cfg);
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("failed writing " + path.string());
}

bool is_snapshot(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  return in && std::string_view(magic, sizeof magic) == "CFRLDSET";
}

/// Loads `--data` (a snapshot from `ingest` or a raw ratings file), falling back to the
/// config's dataset path.
RatingDataset load_dataset(const std::string& data, const RunConfig& cfg) {
  fs::path path = data.empty() ? cfg.dataset_path : fs::path(data);
  if (path.empty()) throw UsageError("no dataset given (use --data or [dataset] path)");
  require_file(path, "dataset");
  if (is_snapshot(path)) return read_snapshot(path);
  return load_ratings(path, cfg.format, cfg.min_user_ratings);
}

Split select_split(const RatingDataset& ds, const RunConfig& cfg) {
  auto splits = make_splits(ds, cfg.n_splits, cfg.test_fraction, cfg.min_ratings, derive_seed(cfg.seed, "splits"));
  return splits.at(static_cast<std::size_t>(cfg.split_index));
}

std::uint64_t mf_seed(const RunConfig& cfg) {
  return derive_seed(cfg.seed, "mf-init", static_cast<std::uint64_t>(cfg.split_index));
}

MfModel obtain_mf(const std::string& mf_path, const RatingDataset& ds, const Split& split, const RunConfig& cfg) {
  if (!mf_path.empty()) {
    require_file(mf_path, "MF checkpoint");
    MfModel model = load_mf_checkpoint(mf_path);
    if (model.num_items() != ds.num_items() || model.num_users() != ds.num_users()) {
      throw UsageError("MF checkpoint " + mf_path + " does not match the dataset");
    }
    return model;
  }
  std::cerr << "pretraining MF (d=" << cfg.mf.d << ", " << cfg.mf.epochs << " epochs)\n";
  return pretrain(ds, split.train_users, cfg.mf, mf_seed(cfg)).model;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// ---------------------------------------------------------------------------------------------

struct IngestOptions {
  std::string input;
  std::string format;
};

int run_ingest(const GlobalOptions& g, const IngestOptions& o) {
  RunConfig cfg = resolve_config(g);
  if (!o.format.empty()) cfg.format = parse_rating_format(o.format);
  const fs::path input = o.input.empty() ? cfg.dataset_path : fs::path(o.input);
  if (input.empty()) throw UsageError("no input ratings file given");
  require_file(input, "ratings file");
  const RatingDataset ds = load_ratings(input, cfg.format, cfg.min_user_ratings);
  const fs::path out = prepare_out(g);
  write_snapshot(ds, out / "dataset.bin");

  const DatasetStats st = dataset_stats(ds);
  const auto candidates = test_candidates(ds, cfg.min_ratings);
  const auto splits = make_splits(ds, cfg.n_splits, cfg.test_fraction, cfg.min_ratings, derive_seed(cfg.seed, "splits"));
  std::ostringstream stats;
  stats << std::setprecision(10) << "users " << st.num_users << "\nitems " << st.num_items << "\nratings "
        << st.rating_count << "\nmean_rating " << st.mean_rating << "\ndensity " << st.density
        << "\ntest_candidates " << candidates.size() << "\ntest_users_per_split " << splits.front().test_users.size()
        << "\n";
  write_text(out / "stats.txt", stats.str());

  std::ofstream sp(out / "splits.csv");
  sp << "split,user_id,role\n";
  for (std::size_t k = 0; k < splits.size(); ++k) {
    for (int u : splits[k].test_users) sp << k << ',' << ds.user_id(u) << ",test\n";
  }
  write_text(out / "config.ini", config_text(cfg));
  std::cout << stats.str();
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct PretrainOptions {
  std::string data;
};

int run_pretrain(const GlobalOptions& g, const PretrainOptions& o) {
  const RunConfig cfg = resolve_config(g);
  const RatingDataset ds = load_dataset(o.data, cfg);
  const fs::path out = prepare_out(g);
  const Split split = select_split(ds, cfg);
  const auto start = std::chrono::steady_clock::now();
  const PretrainResult result = pretrain(ds, split.train_users, cfg.mf, mf_seed(cfg));
  save_mf_checkpoint(result.model, out / "mf.ckpt");
  const double rmse = result.epoch_rmse.empty() ? training_rmse(result.model, ds, split.train_users)
                                                : result.epoch_rmse.back();
  write_mf_manifest({mf_seed(cfg), cfg.mf.epochs, rmse}, out / "mf_manifest.ini");
  std::ofstream log(out / "mf_epochs.csv");
  log << "epoch,training_rmse\n" << std::setprecision(17);
  for (std::size_t e = 0; e < result.epoch_rmse.size(); ++e) {
    log << e + 1 << ',' << result.epoch_rmse[e] << '\n';
    std::cout << "epoch " << e + 1 << " training RMSE " << std::setprecision(6) << result.epoch_rmse[e] << '\n';
  }
  write_text(out / "config.ini", config_text(cfg));
  std::cout << "split " << cfg.split_index << ": " << split.train_users.size() << " training users, training RMSE "
            << std::setprecision(6) << rmse << " (" << std::setprecision(3) << seconds_since(start) << " s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::string mf;
  std::string method = "cfrl";
  std::string task;
  std::optional<int> episodes;
  bool trace = false;
  bool resume = false;
};

int train_linucb_cmd(const RunConfig& cfg, const RatingDataset& ds, const Split& split, const MfModel& mf,
                     const fs::path& out) {
  LinUcbConfig lc = cfg.linucb;
  lc.task = cfg.agent.task;
  lc.horizon = cfg.agent.horizon;
  lc.seed = derive_seed(cfg.seed, "linucb/" + to_string(cfg.agent.task), static_cast<std::uint64_t>(cfg.split_index));
  const auto start = std::chrono::steady_clock::now();
  save_linucb_checkpoint(train_linucb(ds, split, mf, lc), out / "linucb.ckpt");
  std::cout << "trained LinUCB for " << lc.episodes << " episodes (" << std::setprecision(3) << seconds_since(start)
            << " s)\n";
  return kExitOk;
}

int run_train(const GlobalOptions& g, const TrainOptions& o) {
  RunConfig cfg = resolve_config(g);
  if (!o.task.empty()) cfg.agent.task = parse_task(o.task);
  if (o.episodes) cfg.agent.episodes = *o.episodes;
  if (o.method == "dqn") {
    cfg.state = StateKind::Raw;
  } else if (o.method == "cfrl") {
    cfg.state = StateKind::Cf;
  } else if (o.method != "linucb") {
    throw UsageError("train supports --method cfrl, dqn or linucb");
  }
  cfg.validate();

  const RatingDataset ds = load_dataset(o.data, cfg);
  const fs::path out = prepare_out(g);
  const Split split = select_split(ds, cfg);
  const std::string cfg_text = config_text(cfg);
  const fs::path state_path = out / "trainer.state";
  const fs::path trace_path = out / "trace.csv";

  if (o.resume) {
    require_file(state_path, "training state");
    require_file(out / "config.ini", "saved config");
    // Everything but the episode budget must match, so a finished run can also be extended.
    RunConfig saved = load_run_config(out / "config.ini");
    saved.agent.episodes = cfg.agent.episodes;
    if (config_text(saved) != cfg_text) {
      throw UsageError("configuration differs from the run being resumed in " + out.string());
    }
  }

  std::optional<MfModel> mf;
  if (cfg.state == StateKind::Cf || o.method == "linucb") {
    const fs::path saved_mf = out / "mf.ckpt";
    mf = obtain_mf(o.mf.empty() && o.resume && fs::exists(saved_mf) ? saved_mf.string() : o.mf, ds, split, cfg);
    if (o.mf.empty() && !o.resume) save_mf_checkpoint(*mf, saved_mf);
  }
  write_text(out / "config.ini", cfg_text);
  if (o.method == "linucb") return train_linucb_cmd(cfg, ds, split, *mf, out);

  TrainConfig tc = cfg.agent;
  tc.seed = derive_seed(cfg.seed, o.method + "/" + to_string(tc.task), static_cast<std::uint64_t>(cfg.split_index));
  const MfModel state_model = mf ? state_update_model(*mf, tc) : MfModel{};
  RecommendationTrainingEnv env(ds, mf ? &state_model : nullptr, split.train_users, tc.task, tc.horizon, cfg.state);
  QLearner learner(env, tc);
  if (o.resume) {
    learner.load_state(state_path);
    std::cerr << "resumed at episode " << learner.episodes_done() << "\n";
  } else if (o.trace) {
    std::ofstream t(trace_path);
    write_trace_header(t);
  }

  // Trace rows are held back until the next checkpoint so a resumed run never repeats or
  // loses any.
  std::ostringstream pending;
  TraceSink sink;
  if (o.trace) sink = [&](const TraceRow& row) { write_trace_row(pending, row); };
  auto checkpoint = [&] {
    learner.save_state(state_path.string() + ".tmp");
    if (o.trace) {
      std::ofstream t(trace_path, std::ios::app);
      t << pending.str();
      if (!t) throw UsageError("failed writing " + trace_path.string());
      pending.str("");
    }
    fs::rename(state_path.string() + ".tmp", state_path);
  };

  const auto start = std::chrono::steady_clock::now();
  double window = 0.0;
  while (learner.episodes_done() < tc.episodes) {
    const EpisodeLog e = learner.run_episode(sink);
    window += e.reward_sum;
    const int done = learner.episodes_done();
    if (done % 500 == 0 || done == tc.episodes) {
      const int span = done % 500 == 0 ? 500 : done % 500;
      std::cerr << "episode " << done << "/" << tc.episodes << "  mean reward/step " << std::setprecision(4)
                << window / (span * tc.horizon) << "  td-loss " << e.mean_td_loss << "  ("
                << std::setprecision(3) << seconds_since(start) << " s)\n";
      window = 0.0;
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) checkpoint();
  }
  checkpoint();

  save_qnet_checkpoint(learner.network(), out / "qnet.ckpt");
  write_qnet_manifest({tc.seed, learner.train_steps(), tc.sync_period, tc.gamma, tc.alpha}, out / "qnet_manifest.ini");
  std::ofstream log(out / "training_log.csv");
  write_training_log(log, learner.log());
  std::cout << "trained " << o.method << " for " << learner.episodes_done() << " episodes, " << learner.train_steps()
            << " updates, " << learner.sync_count() << " target syncs\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct EvalOptions {
  std::string data;
  std::string method;
  std::string task;
  std::string mf;
  std::string qnet;
  std::string linucb;
};

int run_eval(const GlobalOptions& g, const EvalOptions& o) {
  RunConfig cfg = resolve_config(g);
  if (!o.task.empty()) cfg.agent.task = parse_task(o.task);
  const TaskMode task = cfg.agent.task;
  const auto& methods = all_methods();
  if (std::find(methods.begin(), methods.end(), o.method) == methods.end()) {
    throw UsageError("unknown method '" + o.method + "'");
  }
  if ((o.method == "dqn" || o.method == "cfrl") && o.qnet.empty()) {
    throw UsageError(o.method + " evaluation needs --qnet (train one with the train command)");
  }
  if (!o.qnet.empty()) require_file(o.qnet, "Q-network checkpoint");
  if (!o.linucb.empty()) require_file(o.linucb, "LinUCB checkpoint");

  const RatingDataset ds = load_dataset(o.data, cfg);
  const fs::path out = prepare_out(g);
  const Split split = select_split(ds, cfg);
  std::optional<MfModel> mf;
  if (o.method == "mf" || o.method == "linucb" || o.method == "cfrl") mf = obtain_mf(o.mf, ds, split, cfg);

  std::unique_ptr<Policy> policy;
  if (o.method == "dqn" || o.method == "cfrl") {
    QNetwork net = load_qnet_checkpoint(o.qnet);
    const int input = o.method == "cfrl" ? mf->d() : ds.num_items();
    if (net.input_size() != input || net.output_size() != ds.num_items()) {
      throw UsageError("Q-network checkpoint " + o.qnet + " does not match this method and dataset");
    }
    if (o.method == "cfrl") {
      auto model = std::make_shared<const MfModel>(state_update_model(*mf, cfg.agent));
      policy = std::make_unique<QPolicy>("CFRL", std::move(net), std::move(model), StateKind::Cf);
    } else {
      policy = std::make_unique<QPolicy>("DQN", std::move(net), nullptr, StateKind::Raw);
    }
  } else if (o.method == "linucb" && !o.linucb.empty()) {
    policy = std::make_unique<LinUcbPolicy>(*mf, load_linucb_checkpoint(o.linucb), false);
  } else {
    policy = build_policy(o.method, ds, split, mf ? &*mf : nullptr, task, cfg.benchmark_config(),
                          static_cast<std::uint64_t>(cfg.split_index));
  }

  const auto outcomes = evaluate_policy(*policy, ds, split, task, cfg.agent.horizon, cfg.jobs);
  std::ofstream per_user(out / "eval_users.csv");
  per_user << "user_id,mean_reward\n" << std::setprecision(17);
  for (const auto& u : outcomes) per_user << ds.user_id(u.user) << ',' << u.mean_reward() << '\n';
  const double score = split_score(outcomes);
  std::ofstream summary(out / "eval.csv");
  summary << "method,task,split,score\n"
          << o.method << ',' << to_string(task) << ',' << cfg.split_index << ',' << std::setprecision(17) << score
          << '\n';
  std::cout << policy->name() << ' ' << to_string(task) << " split " << cfg.split_index << ": " << std::setprecision(6)
            << score << " average reward over " << outcomes.size() << " test users\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct BenchmarkOptions {
  std::string data;
  std::vector<std::string> methods;
  std::vector<std::string> tasks;
  std::optional<int> splits;
};

int run_benchmark(const GlobalOptions& g, const BenchmarkOptions& o) {
  RunConfig cfg = resolve_config(g);
  if (!o.methods.empty()) cfg.methods = o.methods;
  if (!o.tasks.empty()) {
    cfg.tasks.clear();
    for (const auto& t : o.tasks) cfg.tasks.push_back(parse_task(t));
  }
  if (o.splits) cfg.n_splits = *o.splits;
  cfg.split_index = 0;
  cfg.validate();
  const RatingDataset ds = load_dataset(o.data, cfg);
  const fs::path out = prepare_out(g);
  write_text(out / "config.ini", config_text(cfg));

  const auto start = std::chrono::steady_clock::now();
  const ComparisonReport report = benchmark(ds, cfg.benchmark_config(), [&](const std::string& line) {
    std::cerr << "[" << std::fixed << std::setprecision(1) << seconds_since(start) << " s] " << line << '\n'
              << std::defaultfloat;
  });
  std::ofstream text(out / "report.txt");
  write_report_text(text, report);
  std::ofstream csv(out / "report.csv");
  write_report_csv(csv, report);
  write_report_text(std::cout, report);
  return report.any_failed() ? kExitMethodFailure : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative-filtering reinforcement learning for interactive recommendation"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may also follow the subcommand
  GlobalOptions g;
  app.add_option("--config", g.config, "INI configuration file");
  app.add_option("--seed", g.seed, "Master seed (overrides [run] seed)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Evaluation threads (overrides [run] jobs)")->check(CLI::PositiveNumber);

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse a ratings file into a snapshot and report its statistics");
  ingest_cmd->add_option("--input", ingest.input, "Ratings file (default: [dataset] path)");
  ingest_cmd->add_option("--format", ingest.format, "tab (u.data) or colon (ratings.dat)");

  PretrainOptions pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Pretrain the MF model on one split's training users");
  pre_cmd->add_option("--data", pre.data, "Snapshot from ingest or a ratings file");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train the CFRL agent, the raw-state DQN or LinUCB");
  train_cmd->add_option("--data", train.data, "Snapshot from ingest or a ratings file");
  train_cmd->add_option("--mf", train.mf, "MF checkpoint (pretrained in-process when omitted)");
  train_cmd->add_option("--method", train.method, "cfrl, dqn or linucb")->capture_default_str();
  train_cmd->add_option("--task", train.task, "TaskI or TaskII (overrides [agent] task)");
  train_cmd->add_option("--episodes", train.episodes, "Training episodes (overrides [agent] episodes)");
  train_cmd->add_flag("--trace", train.trace, "Write every training step to trace.csv");
  train_cmd->add_flag("--resume", train.resume, "Continue from the training state in --out");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate one method on one split's test users");
  eval_cmd->add_option("--data", ev.data, "Snapshot from ingest or a ratings file");
  eval_cmd->add_option("--method", ev.method, "random, popular, impact, mf, linucb, dqn or cfrl")->required();
  eval_cmd->add_option("--task", ev.task, "TaskI or TaskII (overrides [agent] task)");
  eval_cmd->add_option("--mf", ev.mf, "MF checkpoint (pretrained in-process when omitted)");
  eval_cmd->add_option("--qnet", ev.qnet, "Q-network checkpoint for dqn and cfrl");
  eval_cmd->add_option("--linucb", ev.linucb, "LinUCB checkpoint (trained in-process when omitted)");

  BenchmarkOptions bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Every method on every task over all splits");
  bench_cmd->add_option("--data", bench.data, "Snapshot from ingest or a ratings file");
  bench_cmd->add_option("--methods", bench.methods, "Subset of methods (default: [eval] methods)")->delimiter(',');
  bench_cmd->add_option("--tasks", bench.tasks, "Subset of tasks (default: [eval] tasks)")->delimiter(',');
  bench_cmd->add_option("--splits", bench.splits, "Number of splits (overrides [split] n_splits)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*ingest_cmd) return run_ingest(g, ingest);
    if (*pre_cmd) return run_pretrain(g, pre);
    if (*train_cmd) return run_train(g, train);
    if (*eval_cmd) return run_eval(g, ev);
    if (*bench_cmd) return run_benchmark(g, bench);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const binary::FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "method failed: " << e.what() << '\n';
    return kExitMethodFailure;
  } catch (const std::exception& e) {
    std::cerr << "method failed: " << e.what() << '\n';
    return kExitMethodFailure;
  }
  return kExitUsage;
}
