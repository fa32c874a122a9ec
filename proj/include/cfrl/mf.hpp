#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "cfrl/dataset.hpp"

namespace cfrl {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MfParams {
  int d = 16;
  double lambda = 5.0;  // total weight; split per rating as lambda / n_u and lambda / n_i
  double alpha = 0.01;
  int epochs = 30;
};

/// Latent factor model: U is d x m (users), V is d x n (items). No bias terms.
struct MfModel {
  Eigen::MatrixXd U;
  Eigen::MatrixXd V;
  double lambda = 0.0;
  double alpha = 0.0;

  int d() const { return static_cast<int>(V.rows()); }
  int num_users() const { return static_cast<int>(U.cols()); }
  int num_items() const { return static_cast<int>(V.cols()); }
  auto item_vector(int item) const { return V.col(item); }
};

/// The active user's latent vector, which doubles as the CF-based MDP state.
struct UserLatentState {
  Eigen::VectorXd vector;
};

struct PretrainResult {
  MfModel model;
  std::vector<double> epoch_rmse;  // training RMSE after each epoch
};

/// Epoch-wise SGD over the shuffled ratings of `train_users`. Regularization is split across
/// each vector's ratings (lambda / n_u for U_u, lambda / n_i for V_i) so one pass is a
/// stochastic gradient of the full objective
///   sum (U_u.V_i - R_ui)^2 + lambda (sum_u |U_u|^2 + sum_i |V_i|^2) (see mf_objective).
/// Factors start i.i.d. uniform in [-0.01, 0.01]. Throws DivergenceError on a non-finite loss.
PretrainResult pretrain(const RatingDataset& ds, std::span<const int> train_users, const MfParams& params,
                        std::uint64_t seed);

/// The objective pretraining descends: squared errors over the given users' ratings plus
/// lambda times the squared norms of those users' vectors and of every item they rated.
double mf_objective(const MfModel& model, const RatingDataset& ds, std::span<const int> users);

struct MfGradient {
  Eigen::MatrixXd dU;  // d x m
  Eigen::MatrixXd dV;  // d x n
};
/// Analytic gradient of mf_objective. One pretraining epoch applies exactly these terms, split
/// over the individual ratings.
MfGradient mf_objective_gradient(const MfModel& model, const RatingDataset& ds, std::span<const int> users);
double training_rmse(const MfModel& model, const RatingDataset& ds, std::span<const int> users);

UserLatentState init_user_state(int d);

/// One SGD step on (U_u.V_i - r)^2 + lambda |U_u|^2 with item vectors held fixed:
///   U_u <- U_u - 2 alpha [(U_u.V_i - r) V_i + lambda U_u]
UserLatentState online_update(const MfModel& model, const UserLatentState& state, int item, double rating);

double predict(const MfModel& model, const UserLatentState& state, int item);

// Checkpoint: magic, version, d, m, n, lambda, alpha, then U and V row-major as float64.
void save_mf_checkpoint(const MfModel& model, const std::filesystem::path& path);
MfModel load_mf_checkpoint(const std::filesystem::path& path);

struct MfManifest {
  std::uint64_t seed = 0;
  int epochs = 0;
  double training_rmse = 0.0;
};
void write_mf_manifest(const MfManifest& manifest, const std::filesystem::path& path);
MfManifest read_mf_manifest(const std::filesystem::path& path);

}  // namespace cfrl
