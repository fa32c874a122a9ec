#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfrl/agent.hpp"
#include "cfrl/baselines.hpp"
#include "cfrl/dataset.hpp"
#include "cfrl/eval.hpp"
#include "cfrl/mf.hpp"

namespace cfrl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a CLI run needs. Read from an INI file with sections
/// [dataset] [split] [mf] [agent] [linucb] [eval] [run]; missing keys keep their defaults.
struct RunConfig {
  // [dataset]
  std::string dataset_name = "ML100K";
  std::filesystem::path dataset_path;
  RatingFormat format = RatingFormat::TabSeparated;
  int min_user_ratings = 20;
  // [split]
  int n_splits = 10;
  double test_fraction = 0.1;
  int min_ratings = 100;  // test candidates need strictly more ratings than this
  int split_index = 0;    // split used by pretrain/train/eval
  // [mf]
  MfParams mf;
  // [agent]
  TrainConfig agent;
  StateKind state = StateKind::Cf;
  int checkpoint_every = 1000;  // episodes between resumable checkpoints; 0 disables
  // [linucb]
  LinUcbConfig linucb;
  // [eval]
  std::vector<std::string> methods = all_methods();
  std::vector<TaskMode> tasks{TaskMode::TaskI, TaskMode::TaskII};
  // [run]
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
  BenchmarkConfig benchmark_config() const;
};

/// Parses INI text; unknown sections or keys are errors so typos do not pass silently.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);
/// Writes every resolved value, in a form parse_run_config reads back identically.
void write_run_config(std::ostream& out, const RunConfig& cfg);

}  // namespace cfrl
