#include "cfrl/eval.hpp"

#include <cmath>
#include <exception>
#include <numeric>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "cfrl/stats.hpp"

namespace cfrl {

double UserOutcome::mean_reward() const {
  if (rewards.empty()) return 0.0;
  return std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
}

namespace {

UserOutcome run_one(Policy& policy, EpisodeEnvironment& env, int user) {
  UserOutcome outcome{user, {}};
  env.reset(user);
  policy.begin_episode(user);
  while (!env.done()) {
    const int item = policy.act(env.mask());
    if (!env.mask().contains(item)) {
      throw IllegalActionError(policy.name() + " chose unavailable item " + std::to_string(item));
    }
    const double reward = env.step(item).reward;
    policy.observe(item, reward);
    outcome.rewards.push_back(reward);
  }
  return outcome;
}

std::string format_double(double v, int precision) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string format_p(double p) {
  std::ostringstream s;
  if (p >= 1e-3) {
    s << std::setprecision(3) << p;
  } else {
    s << std::setprecision(1) << std::scientific << p;
  }
  return s.str();
}

}  // namespace

std::vector<UserOutcome> evaluate_policy(const Policy& policy, const EpisodeEnvironment& env,
                                         std::span<const int> users, int jobs) {
  std::vector<UserOutcome> outcomes(users.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(jobs), users.size()));
  if (workers == 1) {
    auto p = policy.clone();
    auto e = env.clone();
    for (std::size_t k = 0; k < users.size(); ++k) outcomes[k] = run_one(*p, *e, users[k]);
    return outcomes;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        auto p = policy.clone();
        auto e = env.clone();
        for (std::size_t k = w; k < users.size(); k += workers) outcomes[k] = run_one(*p, *e, users[k]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return outcomes;
}

std::vector<UserOutcome> evaluate_policy(const Policy& policy, const RatingDataset& ds, const Split& split,
                                         TaskMode task, int horizon, int jobs) {
  LoggedRatingsEnvironment env(ds, task, horizon);
  return evaluate_policy(policy, env, split.test_users, jobs);
}

double split_score(std::span<const UserOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("no users evaluated");
  double total = 0.0;
  for (const auto& o : outcomes) total += o.mean_reward();
  return total / static_cast<double>(outcomes.size());
}

EvalResult make_eval_result(std::string method, std::string task, std::string dataset,
                            std::vector<double> split_scores) {
  EvalResult r{std::move(method), std::move(task), std::move(dataset), std::move(split_scores), 0.0, 0.0};
  r.mean = mean(r.split_scores);
  r.stddev = sample_stddev(r.split_scores);
  return r;
}

bool ComparisonReport::any_failed() const {
  for (const auto& row : cells) {
    for (const auto& cell : row) {
      if (!cell.result) return true;
    }
  }
  return false;
}

void summarize(ComparisonReport& report) {
  report.columns.assign(report.tasks.size(), {});
  for (std::size_t c = 0; c < report.tasks.size(); ++c) {
    ColumnSummary& col = report.columns[c];
    for (std::size_t r = 0; r < report.methods.size(); ++r) {
      const auto& cell = report.cells[r][c];
      if (!cell.result) continue;
      const double v = cell.result->mean;
      if (!col.best || v > report.cells[*col.best][c].result->mean) {
        col.second = col.best;
        col.best = r;
      } else if (!col.second || v > report.cells[*col.second][c].result->mean) {
        col.second = r;
      }
    }
    if (!col.best || !col.second) continue;
    const EvalResult& best = *report.cells[*col.best][c].result;
    const EvalResult& second = *report.cells[*col.second][c].result;
    if (second.mean != 0.0) col.improvement = (best.mean - second.mean) / second.mean;
    if (best.split_scores.size() == second.split_scores.size() && best.split_scores.size() >= 2) {
      try {
        col.p_value = paired_t_test(best.split_scores, second.split_scores).p_value;
      } catch (const std::invalid_argument&) {
        // identical or constant-shift scores carry no test
      }
    }
  }
}

void write_report_text(std::ostream& out, const ComparisonReport& report) {
  constexpr int kLabel = 10;
  constexpr int kCell = 18;
  out << "Average reward over T=" << report.horizon << " steps on " << report.dataset
      << " (mean ± std over splits; + best, * second best)\n";
  out << std::left << std::setw(kLabel) << "Method";
  for (const auto& t : report.tasks) out << std::setw(kCell) << t;
  out << '\n';
  for (std::size_t r = 0; r < report.methods.size(); ++r) {
    out << std::setw(kLabel) << report.methods[r];
    for (std::size_t c = 0; c < report.tasks.size(); ++c) {
      const auto& cell = report.cells[r][c];
      std::string text;
      if (!cell.result) {
        text = "FAILED";
      } else {
        text = format_double(cell.result->mean, 3) + "±" + format_double(cell.result->stddev, 3);
        if (report.columns.size() > c && report.columns[c].best == r) text += "+";
        if (report.columns.size() > c && report.columns[c].second == r) text += "*";
      }
      // "±" is two bytes in UTF-8 but one column wide.
      const int pad = kCell + (cell.result ? 1 : 0);
      out << std::setw(pad) << text;
    }
    out << '\n';
  }
  out << std::setw(kLabel) << "p-value";
  for (std::size_t c = 0; c < report.tasks.size(); ++c) {
    const auto& p = report.columns.size() > c ? report.columns[c].p_value : std::nullopt;
    out << std::setw(kCell) << (p ? format_p(*p) : "-");
  }
  out << '\n' << std::setw(kLabel) << "Improve";
  for (std::size_t c = 0; c < report.tasks.size(); ++c) {
    const auto& imp = report.columns.size() > c ? report.columns[c].improvement : std::nullopt;
    out << std::setw(kCell) << (imp ? format_double(*imp * 100.0, 2) + "%" : "-");
  }
  out << '\n';
  for (std::size_t r = 0; r < report.methods.size(); ++r) {
    for (std::size_t c = 0; c < report.tasks.size(); ++c) {
      const auto& cell = report.cells[r][c];
      if (!cell.result) out << "error: " << report.methods[r] << '/' << report.tasks[c] << ": " << cell.error << '\n';
    }
  }
  out << std::right;
}

void write_report_csv(std::ostream& out, const ComparisonReport& report) {
  out << "method,task,dataset,split,score\n";
  out << std::setprecision(17);
  for (std::size_t r = 0; r < report.methods.size(); ++r) {
    for (std::size_t c = 0; c < report.tasks.size(); ++c) {
      const auto& cell = report.cells[r][c];
      if (!cell.result) {
        out << report.methods[r] << ',' << report.tasks[c] << ',' << report.dataset << ",-,failed\n";
        continue;
      }
      for (std::size_t s = 0; s < cell.result->split_scores.size(); ++s) {
        out << report.methods[r] << ',' << report.tasks[c] << ',' << report.dataset << ',' << s << ','
            << cell.result->split_scores[s] << '\n';
      }
    }
  }
}

namespace {

bool needs_mf(const std::string& method) { return method == "mf" || method == "linucb" || method == "cfrl"; }

std::string display_name(const std::string& method) {
  static const std::map<std::string, std::string> names{{"random", "Random"}, {"popular", "Popular"},
                                                        {"impact", "Impact"}, {"mf", "MF"},
                                                        {"linucb", "LinUCB"}, {"dqn", "DQN"},
                                                        {"cfrl", "CFRL"}};
  auto it = names.find(method);
  return it == names.end() ? method : it->second;
}

}  // namespace

std::unique_ptr<Policy> build_policy(const std::string& method, const RatingDataset& ds, const Split& split,
                                     const MfModel* mf, TaskMode task, const BenchmarkConfig& cfg,
                                     std::uint64_t split_index) {
  const std::string label = method + "/" + to_string(task);
  const std::uint64_t seed = derive_seed(cfg.seed, label, split_index);
  if (needs_mf(method) && mf == nullptr) throw std::invalid_argument(method + " needs a pretrained MF model");
  if (method == "random") return std::make_unique<RandomPolicy>(seed);
  if (method == "popular") return std::make_unique<ScorePolicy>(make_popular_policy(ds, split.train_users));
  if (method == "impact") return std::make_unique<ScorePolicy>(make_impact_policy(ds, split.train_users));
  if (method == "mf") return std::make_unique<OnlineMfPolicy>(*mf);
  if (method == "linucb") {
    LinUcbConfig lc = cfg.linucb;
    lc.task = task;
    lc.horizon = cfg.horizon;
    lc.seed = seed;
    return std::make_unique<LinUcbPolicy>(*mf, train_linucb(ds, split, *mf, lc), false);
  }
  TrainConfig tc = cfg.agent;
  tc.task = task;
  tc.horizon = cfg.horizon;
  tc.seed = seed;
  if (method == "dqn") return std::make_unique<QPolicy>("DQN", train_raw_dqn(ds, split, tc).network, nullptr, StateKind::Raw);
  if (method == "cfrl") {
    // The policy must track states with the same update parameters the agent trained on.
    auto trained = train_cfrl(ds, split, *mf, tc);
    auto model = std::make_shared<const MfModel>(state_update_model(*mf, tc));
    return std::make_unique<QPolicy>("CFRL", std::move(trained.network), std::move(model), StateKind::Cf);
  }
  throw std::invalid_argument("unknown method '" + method + "'");
}

ComparisonReport benchmark(const RatingDataset& ds, const BenchmarkConfig& cfg, const ProgressSink& progress) {
  if (cfg.methods.empty()) throw std::invalid_argument("no methods requested");
  if (cfg.tasks.empty()) throw std::invalid_argument("no tasks requested");
  ComparisonReport report;
  report.dataset = cfg.dataset_name;
  report.horizon = cfg.horizon;
  for (const auto& m : cfg.methods) report.methods.push_back(display_name(m));
  for (auto t : cfg.tasks) report.tasks.push_back(to_string(t));

  const auto splits = make_splits(ds, cfg.n_splits, cfg.test_fraction, cfg.min_ratings, derive_seed(cfg.seed, "splits"));
  bool want_mf = false;
  for (const auto& m : cfg.methods) want_mf = want_mf || needs_mf(m);

  std::vector<std::vector<std::vector<double>>> scores(
      cfg.methods.size(), std::vector<std::vector<double>>(cfg.tasks.size()));
  std::vector<std::vector<std::string>> errors(cfg.methods.size(), std::vector<std::string>(cfg.tasks.size()));

  for (std::size_t s = 0; s < splits.size(); ++s) {
    std::optional<MfModel> mf;
    std::string mf_error;
    if (want_mf) {
      try {
        mf = pretrain(ds, splits[s].train_users, cfg.mf, derive_seed(cfg.seed, "mf-init", s)).model;
      } catch (const std::exception& e) {
        mf_error = std::string("MF pretraining failed: ") + e.what();
      }
    }
    for (std::size_t r = 0; r < cfg.methods.size(); ++r) {
      for (std::size_t c = 0; c < cfg.tasks.size(); ++c) {
        if (!errors[r][c].empty()) continue;
        const auto& method = cfg.methods[r];
        try {
          if (needs_mf(method) && !mf) throw std::runtime_error(mf_error);
          auto policy = build_policy(method, ds, splits[s], mf ? &*mf : nullptr, cfg.tasks[c], cfg, s);
          const auto outcomes = evaluate_policy(*policy, ds, splits[s], cfg.tasks[c], cfg.horizon, cfg.jobs);
          const double score = split_score(outcomes);
          scores[r][c].push_back(score);
          if (progress) {
            progress("split " + std::to_string(s) + " " + report.methods[r] + " " + report.tasks[c] + ": " +
                     format_double(score, 4));
          }
        } catch (const std::exception& e) {
          errors[r][c] = e.what();
          if (progress) progress("split " + std::to_string(s) + " " + report.methods[r] + " " + report.tasks[c] +
                                 " FAILED: " + e.what());
        }
      }
    }
  }

  report.cells.assign(cfg.methods.size(), std::vector<ReportCell>(cfg.tasks.size()));
  for (std::size_t r = 0; r < cfg.methods.size(); ++r) {
    for (std::size_t c = 0; c < cfg.tasks.size(); ++c) {
      if (!errors[r][c].empty()) {
        report.cells[r][c].error = errors[r][c];
      } else {
        report.cells[r][c].result =
            make_eval_result(report.methods[r], report.tasks[c], cfg.dataset_name, std::move(scores[r][c]));
      }
    }
  }
  summarize(report);
  return report;
}

}  // namespace cfrl
