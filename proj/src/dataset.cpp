#include "cfrl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "cfrl/binary_io.hpp"
#include "cfrl/seeds.hpp"

namespace cfrl {

namespace {

constexpr std::string_view kSnapshotMagic = "CFRLDSET";
constexpr std::uint32_t kSnapshotVersion = 1;

template <typename T>
T parse_field(std::string_view text, std::size_t line_number, const char* name) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError(line_number, std::string("bad ") + name + " field '" + std::string(text) + "'");
  }
  return value;
}

int index_of(const std::vector<std::int64_t>& sorted_ids, std::int64_t id, const char* what) {
  auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), id);
  if (it == sorted_ids.end() || *it != id) {
    throw std::out_of_range(std::string("unknown ") + what + " id " + std::to_string(id));
  }
  return static_cast<int>(it - sorted_ids.begin());
}

}  // namespace

RatingRecord parse_rating_line(std::string_view line, RatingFormat format, std::size_t line_number) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const std::string_view delim = format == RatingFormat::TabSeparated ? "\t" : "::";

  std::string_view fields[4];
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (count == 4) throw ParseError(line_number, "expected 4 fields, found more");
    fields[count++] = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (pos == std::string_view::npos) break;
    start = pos + delim.size();
  }
  if (count != 4) throw ParseError(line_number, "expected 4 fields, found " + std::to_string(count));

  RatingRecord rec;
  rec.user = parse_field<std::int64_t>(fields[0], line_number, "user");
  rec.item = parse_field<std::int64_t>(fields[1], line_number, "item");
  rec.rating = parse_field<int>(fields[2], line_number, "rating");
  rec.timestamp = parse_field<std::int64_t>(fields[3], line_number, "timestamp");
  return rec;
}

RatingDataset RatingDataset::from_records(std::vector<RatingRecord> records, int min_user_ratings) {
  if (records.empty()) throw ValidationError("no records");

  RatingDataset ds;
  for (const auto& r : records) {
    if (r.rating < 1 || r.rating > 5) {
      throw ValidationError("rating " + std::to_string(r.rating) + " outside 1..5 for user " +
                            std::to_string(r.user) + ", item " + std::to_string(r.item));
    }
    ds.user_ids_.push_back(r.user);
    ds.item_ids_.push_back(r.item);
  }
  for (auto* ids : {&ds.user_ids_, &ds.item_ids_}) {
    std::sort(ids->begin(), ids->end());
    ids->erase(std::unique(ids->begin(), ids->end()), ids->end());
  }

  ds.profiles_.resize(ds.user_ids_.size());
  ds.raters_.resize(ds.item_ids_.size());
  for (const auto& r : records) {
    int u = index_of(ds.user_ids_, r.user, "user");
    int i = index_of(ds.item_ids_, r.item, "item");
    ds.profiles_[u].push_back({i, r.rating});
  }
  for (std::size_t u = 0; u < ds.profiles_.size(); ++u) {
    auto& profile = ds.profiles_[u];
    std::sort(profile.begin(), profile.end(), [](auto a, auto b) { return a.item < b.item; });
    for (std::size_t k = 1; k < profile.size(); ++k) {
      if (profile[k].item == profile[k - 1].item) {
        throw ValidationError("duplicate rating for user " + std::to_string(ds.user_ids_[u]) + ", item " +
                              std::to_string(ds.item_ids_[profile[k].item]));
      }
    }
    if (static_cast<int>(profile.size()) < min_user_ratings) {
      throw ValidationError("user " + std::to_string(ds.user_ids_[u]) + " has " + std::to_string(profile.size()) +
                            " ratings, fewer than " + std::to_string(min_user_ratings));
    }
    for (const auto& entry : profile) ds.raters_[entry.item].push_back(static_cast<int>(u));
  }
  ds.num_ratings_ = records.size();
  return ds;
}

int RatingDataset::rating(int user, int item) const {
  const auto& profile = profiles_.at(user);
  auto it = std::lower_bound(profile.begin(), profile.end(), item,
                             [](const ItemRating& a, int i) { return a.item < i; });
  return it != profile.end() && it->item == item ? it->rating : 0;
}

int RatingDataset::user_index(std::int64_t id) const { return index_of(user_ids_, id, "user"); }
int RatingDataset::item_index(std::int64_t id) const { return index_of(item_ids_, id, "item"); }

std::vector<RatingRecord> RatingDataset::records() const {
  std::vector<RatingRecord> out;
  out.reserve(num_ratings_);
  for (std::size_t u = 0; u < profiles_.size(); ++u) {
    for (const auto& entry : profiles_[u]) {
      out.push_back({user_ids_[u], item_ids_[entry.item], entry.rating, 0});
    }
  }
  return out;
}

RatingDataset load_ratings(const std::filesystem::path& path, RatingFormat format, int min_user_ratings) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ratings file " + path.string());

  std::vector<RatingRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    records.push_back(parse_rating_line(line, format, line_number));
  }
  return RatingDataset::from_records(std::move(records), min_user_ratings);
}

RatingFormat parse_rating_format(std::string_view name) {
  if (name == "tab" || name == "u.data") return RatingFormat::TabSeparated;
  if (name == "colon" || name == "::" || name == "ratings.dat") return RatingFormat::DoubleColonSeparated;
  throw std::invalid_argument("unknown rating format '" + std::string(name) + "' (use tab or colon)");
}

std::string to_string(RatingFormat format) {
  return format == RatingFormat::TabSeparated ? "tab" : "colon";
}

std::vector<int> test_candidates(const RatingDataset& ds, int min_ratings) {
  std::vector<int> out;
  for (int u = 0; u < ds.num_users(); ++u) {
    if (static_cast<int>(ds.user_ratings(u).size()) > min_ratings) out.push_back(u);
  }
  return out;
}

std::vector<Split> make_splits(const RatingDataset& ds, int n_splits, double test_fraction, int min_ratings,
                               std::uint64_t seed) {
  if (n_splits < 1) throw std::invalid_argument("n_splits must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must be in (0, 1)");
  const auto candidates = test_candidates(ds, min_ratings);
  if (candidates.empty()) {
    throw std::invalid_argument("no user has more than " + std::to_string(min_ratings) + " ratings");
  }
  // The epsilon keeps products like 0.1 * 30 from rounding up to 4.
  const auto test_size = static_cast<std::size_t>(
      std::ceil(test_fraction * static_cast<double>(candidates.size()) - 1e-9));

  std::vector<Split> splits;
  for (int k = 0; k < n_splits; ++k) {
    Split split;
    split.seed = derive_seed(seed, "split", static_cast<std::uint64_t>(k));
    Rng rng(split.seed);
    auto shuffled = candidates;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    split.test_users.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(test_size));
    std::sort(split.test_users.begin(), split.test_users.end());
    for (int u = 0; u < ds.num_users(); ++u) {
      if (!std::binary_search(split.test_users.begin(), split.test_users.end(), u)) split.train_users.push_back(u);
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

DatasetStats dataset_stats(const RatingDataset& ds) {
  DatasetStats s;
  s.num_users = ds.num_users();
  s.num_items = ds.num_items();
  s.rating_count = ds.num_ratings();
  long long total = 0;
  for (int u = 0; u < ds.num_users(); ++u) {
    for (const auto& entry : ds.user_ratings(u)) total += entry.rating;
  }
  s.mean_rating = static_cast<double>(total) / static_cast<double>(s.rating_count);
  s.density = static_cast<double>(s.rating_count) / (static_cast<double>(s.num_users) * s.num_items);
  return s;
}

void write_snapshot(const RatingDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write snapshot " + path.string());
  binary::write_magic(out, kSnapshotMagic, kSnapshotVersion);
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(ds.num_users()));
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(ds.num_items()));
  binary::write<std::uint64_t>(out, ds.num_ratings());
  for (const auto& r : ds.records()) {
    binary::write<std::int64_t>(out, r.user);
    binary::write<std::int64_t>(out, r.item);
    binary::write<std::uint8_t>(out, static_cast<std::uint8_t>(r.rating));
  }
  if (!out) throw std::runtime_error("failed writing snapshot " + path.string());
}

RatingDataset read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open snapshot " + path.string());
  auto version = binary::expect_magic(in, kSnapshotMagic);
  if (version != kSnapshotVersion) throw binary::FormatError("unsupported snapshot version " + std::to_string(version));
  auto m = binary::read<std::uint64_t>(in);
  auto n = binary::read<std::uint64_t>(in);
  auto count = binary::read<std::uint64_t>(in);
  std::vector<RatingRecord> records(count);
  for (auto& r : records) {
    r.user = binary::read<std::int64_t>(in);
    r.item = binary::read<std::int64_t>(in);
    r.rating = binary::read<std::uint8_t>(in);
  }
  auto ds = RatingDataset::from_records(std::move(records));
  if (static_cast<std::uint64_t>(ds.num_users()) != m || static_cast<std::uint64_t>(ds.num_items()) != n) {
    throw binary::FormatError("snapshot header does not match its records");
  }
  return ds;
}

}  // namespace cfrl
