#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfrl/transition.hpp"

namespace cfrl {

enum class Activation { Relu, Tanh };

Activation parse_activation(std::string_view name);
std::string to_string(Activation activation);

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
};

/// Parameter-shaped gradient, one entry per layer.
using NetworkGradient = std::vector<DenseLayer>;

/// Feedforward action-value network: input state -> one value per action. Hidden layers use
/// the configured activation, the output layer is linear.
class QNetwork {
 public:
  QNetwork() = default;

  /// Glorot-uniform weights and zero biases from `seed`. Needs at least two layer sizes,
  /// all >= 1.
  static QNetwork init(const std::vector<int>& layer_sizes, std::uint64_t seed,
                       Activation activation = Activation::Relu);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation activation() const { return activation_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const;
  bool same_architecture(const QNetwork& other) const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& state) const;
  Eigen::VectorXd forward(const StateVector& state) const;
  /// Q values for a batch of states given as columns; returns output_size() x batch.
  Eigen::MatrixXd forward_batch(std::span<const StateVector> states) const;
  /// Q(s, a) without evaluating the other outputs.
  double value(const StateVector& state, int action) const;

  /// Gradient of (1 / 2B) sum_j (y_j - Q(s_j, a_j))^2 over the batch. Only the output units of
  /// the taken actions receive an error signal. `mse`, when given, receives the mean squared
  /// residual.
  NetworkGradient half_mse_gradient(std::span<const StateVector> states, std::span<const int> actions,
                                    std::span<const double> targets, double* mse = nullptr) const;
  /// w <- w - step * grad
  void apply_gradient(const NetworkGradient& grad, double step);
  /// The same update as apply_gradient(half_mse_gradient(...), step), but only touches the
  /// output rows of the taken actions and the input columns of nonzero state entries. Returns
  /// the mean squared residual before the step; throws DivergenceError (leaving the network
  /// unchanged) if the residuals or backpropagated errors are non-finite.
  double sgd_step(std::span<const StateVector> states, std::span<const int> actions, std::span<const double> targets,
                  double step);

  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> params);
  bool all_finite() const;

 private:
  std::vector<int> sizes_;
  Activation activation_ = Activation::Relu;
  std::vector<DenseLayer> layers_;
};

/// Frozen copy of a QNetwork used for bootstrap targets.
struct TargetNetwork {
  QNetwork net;
  std::int64_t staleness = 0;  // train steps since the last sync
};

TargetNetwork make_target(const QNetwork& net);
/// Copies parameters into the target and resets staleness. Throws on architecture mismatch.
void sync_target(const QNetwork& net, TargetNetwork& target);

/// y = r for terminal transitions, else r + gamma * max over the next mask of the target's Q.
double td_target(const Transition& tr, const TargetNetwork& target, double gamma);
std::vector<double> td_targets(std::span<const Transition> batch, const TargetNetwork& target, double gamma);

/// One plain SGD step of w <- w + alpha * mean_j [y_j - Q(s_j, a_j)] grad Q(s_j, a_j).
/// Returns the mean squared TD error before the step and bumps the target's staleness.
/// Throws DivergenceError when the loss or the backpropagated errors become non-finite.
double train_step(QNetwork& net, TargetNetwork& target, std::span<const Transition> batch, double gamma,
                  double alpha);

// Checkpoint: magic, version, activation, layer count, layer sizes, then per layer the weight
// (row-major) and bias arrays as float64.
void save_qnet_checkpoint(const QNetwork& net, const std::filesystem::path& path);
QNetwork load_qnet_checkpoint(const std::filesystem::path& path);
void write_qnet(std::ostream& out, const QNetwork& net);
QNetwork read_qnet(std::istream& in);

struct QnetManifest {
  std::uint64_t seed = 0;
  std::int64_t steps_trained = 0;
  int sync_period = 0;
  double gamma = 0.0;
  double alpha = 0.0;
};
void write_qnet_manifest(const QnetManifest& manifest, const std::filesystem::path& path);
QnetManifest read_qnet_manifest(const std::filesystem::path& path);

}  // namespace cfrl
