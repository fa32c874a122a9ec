#include "cfrl/mf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cfrl/binary_io.hpp"
#include "cfrl/seeds.hpp"

namespace cfrl {

namespace {

constexpr std::string_view kMfMagic = "CFRLMF01";
constexpr std::uint32_t kMfVersion = 1;

struct Triple {
  int user;
  int item;
  double rating;
};

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw DivergenceError(std::string(what) + " became non-finite; use a smaller learning rate");
  }
}

void write_row_major(std::ostream& out, const Eigen::MatrixXd& m) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  binary::write_array(out, rm.data(), static_cast<std::size_t>(rm.size()));
}

Eigen::MatrixXd read_row_major(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  binary::read_array(in, rm.data(), static_cast<std::size_t>(rm.size()));
  return rm;
}

}  // namespace

PretrainResult pretrain(const RatingDataset& ds, std::span<const int> train_users, const MfParams& params,
                        std::uint64_t seed) {
  if (params.d < 1) throw std::invalid_argument("latent dimension d must be >= 1");
  if (!(params.alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (params.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");

  std::vector<Triple> triples;
  std::vector<int> item_count(ds.num_items(), 0);
  for (int u : train_users) {
    for (const auto& e : ds.user_ratings(u)) {
      triples.push_back({u, e.item, static_cast<double>(e.rating)});
      ++item_count[e.item];
    }
  }
  if (triples.empty()) throw std::invalid_argument("training users have no ratings");

  Rng rng(seed);
  std::uniform_real_distribution<double> init(-0.01, 0.01);
  PretrainResult result;
  MfModel& model = result.model;
  model.lambda = params.lambda;
  model.alpha = params.alpha;
  model.U = Eigen::MatrixXd::NullaryExpr(params.d, ds.num_users(), [&] { return init(rng); });
  model.V = Eigen::MatrixXd::NullaryExpr(params.d, ds.num_items(), [&] { return init(rng); });

  const double a2 = 2.0 * params.alpha;
  Eigen::VectorXd u_old(params.d);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(triples.begin(), triples.end(), rng);
    for (const auto& t : triples) {
      auto U_u = model.U.col(t.user);
      auto V_i = model.V.col(t.item);
      const double lu = params.lambda / static_cast<double>(ds.user_ratings(t.user).size());
      const double li = params.lambda / static_cast<double>(item_count[t.item]);
      const double err = U_u.dot(V_i) - t.rating;
      u_old = U_u;
      U_u -= a2 * (err * V_i + lu * U_u);
      V_i -= a2 * (err * u_old + li * V_i);
    }
    double rmse = training_rmse(model, ds, train_users);
    if (!std::isfinite(rmse)) {
      throw DivergenceError("matrix factorization diverged at epoch " + std::to_string(epoch + 1) +
                            "; use a smaller learning rate");
    }
    result.epoch_rmse.push_back(rmse);
  }
  return result;
}

namespace {

// Items rated by at least one of `users`.
std::vector<char> rated_items(const RatingDataset& ds, std::span<const int> users) {
  std::vector<char> rated(static_cast<std::size_t>(ds.num_items()), 0);
  for (int u : users) {
    for (const auto& e : ds.user_ratings(u)) rated[e.item] = 1;
  }
  return rated;
}

}  // namespace

double mf_objective(const MfModel& model, const RatingDataset& ds, std::span<const int> users) {
  double loss = 0.0;
  double reg = 0.0;
  for (int u : users) {
    for (const auto& e : ds.user_ratings(u)) {
      double err = model.U.col(u).dot(model.V.col(e.item)) - e.rating;
      loss += err * err;
    }
    reg += model.U.col(u).squaredNorm();
  }
  const auto rated = rated_items(ds, users);
  for (int i = 0; i < ds.num_items(); ++i) {
    if (rated[i]) reg += model.V.col(i).squaredNorm();
  }
  return loss + model.lambda * reg;
}

MfGradient mf_objective_gradient(const MfModel& model, const RatingDataset& ds, std::span<const int> users) {
  MfGradient g{Eigen::MatrixXd::Zero(model.U.rows(), model.U.cols()),
               Eigen::MatrixXd::Zero(model.V.rows(), model.V.cols())};
  for (int u : users) {
    for (const auto& e : ds.user_ratings(u)) {
      const double err = model.U.col(u).dot(model.V.col(e.item)) - e.rating;
      g.dU.col(u) += 2.0 * err * model.V.col(e.item);
      g.dV.col(e.item) += 2.0 * err * model.U.col(u);
    }
    g.dU.col(u) += 2.0 * model.lambda * model.U.col(u);
  }
  const auto rated = rated_items(ds, users);
  for (int i = 0; i < ds.num_items(); ++i) {
    if (rated[i]) g.dV.col(i) += 2.0 * model.lambda * model.V.col(i);
  }
  return g;
}

double training_rmse(const MfModel& model, const RatingDataset& ds, std::span<const int> users) {
  double sse = 0.0;
  std::size_t count = 0;
  for (int u : users) {
    for (const auto& e : ds.user_ratings(u)) {
      double err = model.U.col(u).dot(model.V.col(e.item)) - e.rating;
      sse += err * err;
      ++count;
    }
  }
  return count ? std::sqrt(sse / static_cast<double>(count)) : 0.0;
}

UserLatentState init_user_state(int d) {
  if (d < 1) throw std::invalid_argument("latent dimension d must be >= 1");
  return {Eigen::VectorXd::Zero(d)};
}

UserLatentState online_update(const MfModel& model, const UserLatentState& state, int item, double rating) {
  if (item < 0 || item >= model.num_items()) throw std::out_of_range("item index out of range");
  if (!std::isfinite(rating)) throw std::invalid_argument("rating must be finite");
  const auto V_i = model.V.col(item);
  const double err = state.vector.dot(V_i) - rating;
  UserLatentState next{state.vector - 2.0 * model.alpha * (err * V_i + model.lambda * state.vector)};
  check_finite(next.vector, "user state");
  return next;
}

double predict(const MfModel& model, const UserLatentState& state, int item) {
  if (item < 0 || item >= model.num_items()) throw std::out_of_range("item index out of range");
  return state.vector.dot(model.V.col(item));
}

void save_mf_checkpoint(const MfModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  binary::write_magic(out, kMfMagic, kMfVersion);
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(model.d()));
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(model.num_users()));
  binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(model.num_items()));
  binary::write<double>(out, model.lambda);
  binary::write<double>(out, model.alpha);
  write_row_major(out, model.U);
  write_row_major(out, model.V);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

MfModel load_mf_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  auto version = binary::expect_magic(in, kMfMagic);
  if (version != kMfVersion) throw binary::FormatError("unsupported MF checkpoint version");
  auto d = static_cast<Eigen::Index>(binary::read<std::uint64_t>(in));
  auto m = static_cast<Eigen::Index>(binary::read<std::uint64_t>(in));
  auto n = static_cast<Eigen::Index>(binary::read<std::uint64_t>(in));
  MfModel model;
  model.lambda = binary::read<double>(in);
  model.alpha = binary::read<double>(in);
  model.U = read_row_major(in, d, m);
  model.V = read_row_major(in, d, n);
  return model;
}

void write_mf_manifest(const MfManifest& manifest, const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  tree.put("mf.seed", manifest.seed);
  tree.put("mf.epochs", manifest.epochs);
  std::ostringstream rmse;
  rmse.precision(17);
  rmse << manifest.training_rmse;
  tree.put("mf.training_rmse", rmse.str());
  boost::property_tree::write_ini(path.string(), tree);
}

MfManifest read_mf_manifest(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  boost::property_tree::read_ini(path.string(), tree);
  return {tree.get<std::uint64_t>("mf.seed"), tree.get<int>("mf.epochs"), tree.get<double>("mf.training_rmse")};
}

}  // namespace cfrl
