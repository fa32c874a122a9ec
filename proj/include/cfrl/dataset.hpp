#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfrl {

enum class RatingFormat {
  TabSeparated,          // MovieLens u.data
  DoubleColonSeparated,  // MovieLens ratings.dat
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RatingRecord {
  std::int64_t user = 0;
  std::int64_t item = 0;
  int rating = 0;
  std::int64_t timestamp = 0;
};

struct ItemRating {
  int item;
  int rating;
};

/// Immutable sparse rating matrix with dense 0-based indices. External ids are sorted
/// ascending before densification, so the same input always yields the same index maps.
class RatingDataset {
 public:
  /// Builds a dataset from parsed records. Throws ValidationError on ratings outside 1..5,
  /// duplicate (user, item) pairs, an empty record list, or a user with fewer than
  /// `min_user_ratings` ratings.
  static RatingDataset from_records(std::vector<RatingRecord> records, int min_user_ratings = 0);

  int num_users() const { return static_cast<int>(user_ids_.size()); }
  int num_items() const { return static_cast<int>(item_ids_.size()); }
  std::size_t num_ratings() const { return num_ratings_; }

  /// Ratings of a user sorted by item index.
  std::span<const ItemRating> user_ratings(int user) const { return profiles_.at(user); }
  /// Users who rated an item, sorted ascending.
  std::span<const int> item_raters(int item) const { return raters_.at(item); }

  /// Logged rating or 0 if the user never rated the item.
  int rating(int user, int item) const;

  std::int64_t user_id(int user) const { return user_ids_.at(user); }
  std::int64_t item_id(int item) const { return item_ids_.at(item); }
  /// Dense index of an external id; throws std::out_of_range if unknown.
  int user_index(std::int64_t id) const;
  int item_index(std::int64_t id) const;

  /// All ratings as records with external ids, ordered by (user index, item index).
  std::vector<RatingRecord> records() const;

 private:
  std::vector<std::int64_t> user_ids_;
  std::vector<std::int64_t> item_ids_;
  std::vector<std::vector<ItemRating>> profiles_;
  std::vector<std::vector<int>> raters_;
  std::size_t num_ratings_ = 0;
};

/// Parses one ratings line; `line_number` is only used for error messages.
RatingRecord parse_rating_line(std::string_view line, RatingFormat format, std::size_t line_number);

/// Loads a MovieLens ratings file. MovieLens guarantees at least 20 ratings per user, which is
/// checked by default.
RatingDataset load_ratings(const std::filesystem::path& path, RatingFormat format,
                           int min_user_ratings = 20);

RatingFormat parse_rating_format(std::string_view name);
std::string to_string(RatingFormat format);

struct Split {
  std::vector<int> train_users;  // sorted
  std::vector<int> test_users;   // sorted
  std::uint64_t seed = 0;
};

/// Users with strictly more than `min_ratings` ratings, in index order.
std::vector<int> test_candidates(const RatingDataset& ds, int min_ratings);

/// Draws `n_splits` independent splits. Each takes ceil(test_fraction * |candidates|)
/// candidates uniformly at random as test users; every other user trains.
std::vector<Split> make_splits(const RatingDataset& ds, int n_splits, double test_fraction,
                               int min_ratings, std::uint64_t seed);

struct DatasetStats {
  int num_users = 0;
  int num_items = 0;
  std::size_t rating_count = 0;
  double mean_rating = 0.0;
  double density = 0.0;
};

DatasetStats dataset_stats(const RatingDataset& ds);

// Normalized snapshot: magic, version, m, n, count, then (user id, item id, rating) records.
void write_snapshot(const RatingDataset& ds, const std::filesystem::path& path);
RatingDataset read_snapshot(const std::filesystem::path& path);

}  // namespace cfrl
