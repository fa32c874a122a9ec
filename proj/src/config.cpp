#include "cfrl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace cfrl {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"dataset", {"name", "path", "format", "min_user_ratings"}},
      {"split", {"n_splits", "test_fraction", "min_ratings", "index"}},
      {"mf", {"d", "lambda", "alpha", "epochs"}},
      {"agent",
       {"episodes", "horizon", "gamma", "epsilon", "epsilon_end", "epsilon_decay_episodes", "alpha", "mf_alpha",
        "mf_lambda", "sync_period", "batch_size", "replay_capacity", "hidden", "activation", "task", "state",
        "checkpoint_every"}},
      {"linucb", {"episodes", "alpha_ucb"}},
      {"eval", {"methods", "tasks"}},
      {"run", {"seed", "jobs"}},
  };
  return keys;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
void get(const pt::ptree& tree, const std::string& key, T& value) {
  if (auto v = tree.get_optional<std::string>(key)) {
    std::istringstream in(*v);
    T parsed{};
    in >> parsed;
    if (!in || !(in >> std::ws).eof()) throw ConfigError("bad value for " + key + ": '" + *v + "'");
    value = parsed;
  }
}

void get_string(const pt::ptree& tree, const std::string& key, std::string& value) {
  if (auto v = tree.get_optional<std::string>(key)) value = *v;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) out += (k ? "," : "") + items[k];
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (min_user_ratings < 0) throw ConfigError("dataset.min_user_ratings must be >= 0");
  if (n_splits < 1) throw ConfigError("split.n_splits must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction <= 1.0)) throw ConfigError("split.test_fraction must be in (0, 1]");
  if (split_index < 0 || split_index >= n_splits) throw ConfigError("split.index must be in [0, n_splits)");
  if (mf.d < 1) throw ConfigError("mf.d must be >= 1");
  if (mf.epochs < 0) throw ConfigError("mf.epochs must be >= 0");
  if (!(mf.alpha > 0.0)) throw ConfigError("mf.alpha must be > 0");
  if (!(mf.lambda >= 0.0)) throw ConfigError("mf.lambda must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("agent.checkpoint_every must be >= 0");
  if (linucb.episodes < 0) throw ConfigError("linucb.episodes must be >= 0");
  if (!(linucb.alpha_ucb > 0.0)) throw ConfigError("linucb.alpha_ucb must be > 0");
  if (jobs < 1) throw ConfigError("run.jobs must be >= 1");
  if (methods.empty()) throw ConfigError("eval.methods is empty");
  for (const auto& m : methods) {
    if (std::find(all_methods().begin(), all_methods().end(), m) == all_methods().end()) {
      throw ConfigError("unknown method '" + m + "'");
    }
  }
  if (tasks.empty()) throw ConfigError("eval.tasks is empty");
  try {
    agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("agent: ") + e.what());
  }
}

BenchmarkConfig RunConfig::benchmark_config() const {
  BenchmarkConfig b;
  b.dataset_name = dataset_name;
  b.methods = methods;
  b.tasks = tasks;
  b.n_splits = n_splits;
  b.test_fraction = test_fraction;
  b.min_ratings = min_ratings;
  b.horizon = agent.horizon;
  b.mf = mf;
  b.agent = agent;
  b.linucb = linucb;
  b.seed = seed;
  b.jobs = jobs;
  return b;
}

RunConfig parse_run_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown config key " + section + "." + key);
    }
  }

  RunConfig cfg;
  try {
    const pt::ptree empty;
    auto section = [&](const char* name) -> const pt::ptree& {
      auto child = tree.get_child_optional(name);
      return child ? *child : empty;
    };
    const auto& ds = section("dataset");
    get_string(ds, "name", cfg.dataset_name);
    if (auto p = ds.get_optional<std::string>("path")) cfg.dataset_path = *p;
    if (auto f = ds.get_optional<std::string>("format")) cfg.format = parse_rating_format(*f);
    get(ds, "min_user_ratings", cfg.min_user_ratings);

    const auto& sp = section("split");
    get(sp, "n_splits", cfg.n_splits);
    get(sp, "test_fraction", cfg.test_fraction);
    get(sp, "min_ratings", cfg.min_ratings);
    get(sp, "index", cfg.split_index);

    const auto& mf = section("mf");
    get(mf, "d", cfg.mf.d);
    get(mf, "lambda", cfg.mf.lambda);
    get(mf, "alpha", cfg.mf.alpha);
    get(mf, "epochs", cfg.mf.epochs);

    const auto& ag = section("agent");
    get(ag, "episodes", cfg.agent.episodes);
    get(ag, "horizon", cfg.agent.horizon);
    get(ag, "gamma", cfg.agent.gamma);
    get(ag, "epsilon", cfg.agent.epsilon);
    cfg.agent.epsilon_end = cfg.agent.epsilon;
    get(ag, "epsilon_end", cfg.agent.epsilon_end);
    get(ag, "epsilon_decay_episodes", cfg.agent.epsilon_decay_episodes);
    get(ag, "alpha", cfg.agent.alpha);
    if (ag.get_optional<std::string>("mf_alpha")) {
      double v = 0;
      get(ag, "mf_alpha", v);
      cfg.agent.mf_alpha = v;
    }
    if (ag.get_optional<std::string>("mf_lambda")) {
      double v = 0;
      get(ag, "mf_lambda", v);
      cfg.agent.mf_lambda = v;
    }
    get(ag, "sync_period", cfg.agent.sync_period);
    get(ag, "batch_size", cfg.agent.batch_size);
    get(ag, "replay_capacity", cfg.agent.replay_capacity);
    if (auto h = ag.get_optional<std::string>("hidden")) {
      cfg.agent.hidden.clear();
      for (const auto& s : split_list(*h)) {
        try {
          cfg.agent.hidden.push_back(std::stoi(s));
        } catch (const std::exception&) {
          throw ConfigError("bad value for agent.hidden: '" + *h + "'");
        }
      }
    }
    if (auto a = ag.get_optional<std::string>("activation")) cfg.agent.activation = parse_activation(*a);
    if (auto t = ag.get_optional<std::string>("task")) cfg.agent.task = parse_task(*t);
    if (auto s = ag.get_optional<std::string>("state")) {
      if (*s == "cf") {
        cfg.state = StateKind::Cf;
      } else if (*s == "raw") {
        cfg.state = StateKind::Raw;
      } else {
        throw ConfigError("agent.state must be 'cf' or 'raw'");
      }
    }
    get(ag, "checkpoint_every", cfg.checkpoint_every);

    const auto& lu = section("linucb");
    get(lu, "episodes", cfg.linucb.episodes);
    get(lu, "alpha_ucb", cfg.linucb.alpha_ucb);

    const auto& ev = section("eval");
    if (auto m = ev.get_optional<std::string>("methods")) cfg.methods = split_list(*m);
    if (auto t = ev.get_optional<std::string>("tasks")) {
      cfg.tasks.clear();
      for (const auto& s : split_list(*t)) cfg.tasks.push_back(parse_task(s));
    }

    const auto& run = section("run");
    get(run, "seed", cfg.seed);
    get(run, "jobs", cfg.jobs);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.linucb.horizon = cfg.agent.horizon;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  return parse_run_config(in);
}

void write_run_config(std::ostream& out, const RunConfig& cfg) {
  out << std::setprecision(17);
  out << "[dataset]\nname = " << cfg.dataset_name << "\n";
  if (!cfg.dataset_path.empty()) out << "path = " << cfg.dataset_path.string() << "\n";
  out << "format = " << to_string(cfg.format) << "\nmin_user_ratings = " << cfg.min_user_ratings << "\n\n";
  out << "[split]\nn_splits = " << cfg.n_splits << "\ntest_fraction = " << cfg.test_fraction
      << "\nmin_ratings = " << cfg.min_ratings << "\nindex = " << cfg.split_index << "\n\n";
  out << "[mf]\nd = " << cfg.mf.d << "\nlambda = " << cfg.mf.lambda << "\nalpha = " << cfg.mf.alpha
      << "\nepochs = " << cfg.mf.epochs << "\n\n";
  const auto& a = cfg.agent;
  std::vector<std::string> hidden;
  for (int h : a.hidden) hidden.push_back(std::to_string(h));
  out << "[agent]\nepisodes = " << a.episodes << "\nhorizon = " << a.horizon << "\ngamma = " << a.gamma
      << "\nepsilon = " << a.epsilon << "\nepsilon_end = " << a.epsilon_end
      << "\nepsilon_decay_episodes = " << a.epsilon_decay_episodes << "\nalpha = " << a.alpha << "\n";
  if (a.mf_alpha) out << "mf_alpha = " << *a.mf_alpha << "\n";
  if (a.mf_lambda) out << "mf_lambda = " << *a.mf_lambda << "\n";
  out << "sync_period = " << a.sync_period << "\nbatch_size = " << a.batch_size
      << "\nreplay_capacity = " << a.replay_capacity << "\nhidden = " << join(hidden)
      << "\nactivation = " << to_string(a.activation) << "\ntask = " << to_string(a.task)
      << "\nstate = " << (cfg.state == StateKind::Cf ? "cf" : "raw") << "\ncheckpoint_every = " << cfg.checkpoint_every
      << "\n\n";
  out << "[linucb]\nepisodes = " << cfg.linucb.episodes << "\nalpha_ucb = " << cfg.linucb.alpha_ucb << "\n\n";
  std::vector<std::string> tasks;
  for (auto t : cfg.tasks) tasks.push_back(to_string(t));
  out << "[eval]\nmethods = " << join(cfg.methods) << "\ntasks = " << join(tasks) << "\n\n";
  out << "[run]\nseed = " << cfg.seed << "\njobs = " << cfg.jobs << "\n";
}

}  // namespace cfrl
