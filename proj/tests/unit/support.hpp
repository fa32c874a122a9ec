#pragma once

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "cfrl/dataset.hpp"

namespace cfrl::testing {

/// Dataset from (user id, item id, rating) triples.
inline RatingDataset make_dataset(std::initializer_list<std::tuple<int, int, int>> triples) {
  std::vector<RatingRecord> records;
  for (auto [u, i, r] : triples) records.push_back({u, i, r, 0});
  return RatingDataset::from_records(records);
}

inline std::vector<int> all_users(const RatingDataset& ds) {
  std::vector<int> users(static_cast<std::size_t>(ds.num_users()));
  std::iota(users.begin(), users.end(), 0);
  return users;
}

/// MovieLens 100K if it is present at the configured path, else null.
inline const RatingDataset* ml100k() {
  static const std::optional<RatingDataset> ds = []() -> std::optional<RatingDataset> {
    if (!std::filesystem::exists(CFRL_ML100K_PATH)) return std::nullopt;
    return load_ratings(CFRL_ML100K_PATH, RatingFormat::TabSeparated);
  }();
  return ds ? &*ds : nullptr;
}

#define REQUIRE_ML100K(name)                                                            \
  const cfrl::RatingDataset* name = cfrl::testing::ml100k();                            \
  if (name == nullptr) {                                                                \
    FAIL("MovieLens 100K not found at " CFRL_ML100K_PATH " (run scripts/fetch_ml100k.sh)"); \
    return;                                                                             \
  }

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cfrl-" + tag + "-" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace cfrl::testing
