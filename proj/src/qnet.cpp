#include "cfrl/qnet.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cfrl/binary_io.hpp"
#include "cfrl/mf.hpp"
#include "cfrl/seeds.hpp"

namespace cfrl {

namespace {

constexpr std::string_view kQnetMagic = "CFRLQNET";
constexpr std::uint32_t kQnetVersion = 1;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
void activate(Eigen::MatrixBase<Derived>& z, Activation activation) {
  if (activation == Activation::Relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Derivative of the activation expressed through its output.
Eigen::VectorXd activation_slope(const Eigen::VectorXd& out, Activation activation) {
  if (activation == Activation::Relu) return (out.array() > 0.0).cast<double>().matrix();
  return (1.0 - out.array().square()).matrix();
}

Eigen::SparseMatrix<double> to_columns(std::span<const StateVector> states, int rows) {
  Eigen::SparseMatrix<double> m(rows, static_cast<Eigen::Index>(states.size()));
  Eigen::Index nnz = 0;
  for (const auto& s : states) nnz += s.nonZeros();
  m.reserve(nnz);
  for (std::size_t j = 0; j < states.size(); ++j) {
    if (states[j].size() != rows) throw std::invalid_argument("state width does not match the input layer");
    m.startVec(static_cast<Eigen::Index>(j));
    for (StateVector::InnerIterator it(states[j]); it; ++it) {
      m.insertBack(it.index(), static_cast<Eigen::Index>(j)) = it.value();
    }
  }
  m.finalize();
  return m;
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "' (use relu or tanh)");
}

std::string to_string(Activation activation) { return activation == Activation::Relu ? "relu" : "tanh"; }

StateVector to_state_vector(const Eigen::Ref<const Eigen::VectorXd>& dense) {
  StateVector v(dense.size());
  v.reserve(dense.size());
  for (Eigen::Index i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) v.insertBack(i) = dense[i];
  }
  return v;
}

QNetwork QNetwork::init(const std::vector<int>& layer_sizes, std::uint64_t seed, Activation activation) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("a Q-network needs at least an input and an output layer");
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("layer sizes must be >= 1");
  }
  QNetwork net;
  net.sizes_ = layer_sizes;
  net.activation_ = activation;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer;
    layer.weights = Eigen::MatrixXd::NullaryExpr(out, in, [&] { return dist(rng); });
    layer.bias = Eigen::VectorXd::Zero(out);
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

std::size_t QNetwork::parameter_count() const {
  std::size_t count = 0;
  for (const auto& layer : layers_) count += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  return count;
}

bool QNetwork::same_architecture(const QNetwork& other) const {
  return sizes_ == other.sizes_ && activation_ == other.activation_;
}

Eigen::VectorXd QNetwork::forward(const Eigen::VectorXd& state) const {
  if (state.size() != input_size()) throw std::invalid_argument("state width does not match the input layer");
  Eigen::VectorXd a = state;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].weights * a + layers_[l].bias;
    if (l + 1 < layers_.size()) activate(z, activation_);
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd QNetwork::forward(const StateVector& state) const {
  if (state.size() != input_size()) throw std::invalid_argument("state width does not match the input layer");
  Eigen::VectorXd a = layers_[0].weights * state + layers_[0].bias;
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    activate(a, activation_);
    a = layers_[l].weights * a + layers_[l].bias;
  }
  return a;
}

Eigen::MatrixXd QNetwork::forward_batch(std::span<const StateVector> states) const {
  Eigen::SparseMatrix<double> x = to_columns(states, input_size());
  Eigen::MatrixXd a = layers_[0].weights * x;
  a.colwise() += layers_[0].bias;
  for (std::size_t l = 1; l < layers_.size(); ++l) {
    activate(a, activation_);
    Eigen::MatrixXd z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    a = std::move(z);
  }
  return a;
}

double QNetwork::value(const StateVector& state, int action) const {
  if (action < 0 || action >= output_size()) throw std::out_of_range("action out of range");
  if (layers_.size() == 1) return layers_[0].weights.row(action) * state + layers_[0].bias[action];
  Eigen::VectorXd a = layers_[0].weights * state + layers_[0].bias;
  activate(a, activation_);
  for (std::size_t l = 1; l + 1 < layers_.size(); ++l) {
    a = layers_[l].weights * a + layers_[l].bias;
    activate(a, activation_);
  }
  return layers_.back().weights.row(action).dot(a) + layers_.back().bias[action];
}

NetworkGradient QNetwork::half_mse_gradient(std::span<const StateVector> states, std::span<const int> actions,
                                            std::span<const double> targets, double* mse) const {
  if (states.empty() || states.size() != actions.size() || states.size() != targets.size()) {
    throw std::invalid_argument("batch must be non-empty with matching states, actions and targets");
  }
  NetworkGradient grad;
  for (const auto& layer : layers_) {
    grad.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()),
                    Eigen::VectorXd::Zero(layer.bias.size())});
  }
  const double inv_batch = 1.0 / static_cast<double>(states.size());
  const std::size_t depth = layers_.size();
  std::vector<Eigen::VectorXd> acts(depth);  // acts[l] = output of hidden layer l (l < depth - 1)
  double sq = 0.0;

  for (std::size_t j = 0; j < states.size(); ++j) {
    const StateVector& x = states[j];
    if (x.size() != input_size()) throw std::invalid_argument("state width does not match the input layer");
    const int a = actions[j];
    if (a < 0 || a >= output_size()) throw std::out_of_range("action out of range");

    for (std::size_t l = 0; l + 1 < depth; ++l) {
      Eigen::VectorXd z = l == 0 ? Eigen::VectorXd(layers_[0].weights * x + layers_[0].bias)
                                 : Eigen::VectorXd(layers_[l].weights * acts[l - 1] + layers_[l].bias);
      activate(z, activation_);
      acts[l] = std::move(z);
    }
    const DenseLayer& out = layers_.back();
    const double q = depth == 1 ? out.weights.row(a) * x + out.bias[a]
                                : out.weights.row(a).dot(acts[depth - 2]) + out.bias[a];
    const double residual = q - targets[j];
    sq += residual * residual;
    const double g = residual * inv_batch;

    // Output layer: only row `a` carries error.
    grad.back().bias[a] += g;
    if (depth == 1) {
      for (StateVector::InnerIterator it(x); it; ++it) grad.back().weights(a, it.index()) += g * it.value();
      continue;
    }
    grad.back().weights.row(a) += g * acts[depth - 2].transpose();
    Eigen::VectorXd delta = (out.weights.row(a).transpose() * g).cwiseProduct(
        activation_slope(acts[depth - 2], activation_));

    for (std::size_t l = depth - 1; l-- > 0;) {
      grad[l].bias += delta;
      if (l == 0) {
        for (StateVector::InnerIterator it(x); it; ++it) grad[0].weights.col(it.index()) += delta * it.value();
      } else {
        grad[l].weights.noalias() += delta * acts[l - 1].transpose();
        delta = (layers_[l].weights.transpose() * delta).cwiseProduct(activation_slope(acts[l - 1], activation_));
      }
    }
  }
  if (mse != nullptr) *mse = sq * inv_batch;
  return grad;
}

void QNetwork::apply_gradient(const NetworkGradient& grad, double step) {
  if (grad.size() != layers_.size()) throw std::invalid_argument("gradient does not match the network");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weights.noalias() -= step * grad[l].weights;
    layers_[l].bias.noalias() -= step * grad[l].bias;
  }
}

double QNetwork::sgd_step(std::span<const StateVector> states, std::span<const int> actions,
                          std::span<const double> targets, double step) {
  if (states.empty() || states.size() != actions.size() || states.size() != targets.size()) {
    throw std::invalid_argument("batch must be non-empty with matching states, actions and targets");
  }
  const std::size_t batch = states.size();
  const std::size_t depth = layers_.size();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  // Everything is computed from the pre-update weights before anything is applied.
  std::vector<std::vector<Eigen::VectorXd>> acts(batch, std::vector<Eigen::VectorXd>(depth - 1));
  std::vector<std::vector<Eigen::VectorXd>> deltas(batch, std::vector<Eigen::VectorXd>(depth - 1));
  std::vector<double> g(batch);
  double sq = 0.0;
  bool finite = true;
  for (std::size_t j = 0; j < batch; ++j) {
    const StateVector& x = states[j];
    if (x.size() != input_size()) throw std::invalid_argument("state width does not match the input layer");
    const int a = actions[j];
    if (a < 0 || a >= output_size()) throw std::out_of_range("action out of range");
    auto& h = acts[j];
    for (std::size_t l = 0; l + 1 < depth; ++l) {
      Eigen::VectorXd z = l == 0 ? Eigen::VectorXd(layers_[0].weights * x + layers_[0].bias)
                                 : Eigen::VectorXd(layers_[l].weights * h[l - 1] + layers_[l].bias);
      activate(z, activation_);
      h[l] = std::move(z);
    }
    const DenseLayer& out = layers_.back();
    const double q = depth == 1 ? out.weights.row(a) * x + out.bias[a] : out.weights.row(a).dot(h[depth - 2]) + out.bias[a];
    const double residual = q - targets[j];
    sq += residual * residual;
    g[j] = residual * inv_batch;
    if (depth == 1) continue;
    Eigen::VectorXd delta = (out.weights.row(a).transpose() * g[j]).cwiseProduct(activation_slope(h[depth - 2], activation_));
    for (std::size_t l = depth - 1; l-- > 0;) {
      finite = finite && delta.allFinite();
      deltas[j][l] = delta;
      if (l > 0) delta = (layers_[l].weights.transpose() * delta).cwiseProduct(activation_slope(h[l - 1], activation_));
    }
  }
  if (!std::isfinite(sq) || !finite) {
    throw DivergenceError("Q-network TD loss became non-finite; use a smaller learning rate");
  }

  DenseLayer& out = layers_.back();
  if (depth == 1) {
    for (std::size_t j = 0; j < batch; ++j) {
      const int a = actions[j];
      out.bias[a] -= step * g[j];
      for (StateVector::InnerIterator it(states[j]); it; ++it) out.weights(a, it.index()) -= step * g[j] * it.value();
    }
    return sq * inv_batch;
  }
  for (std::size_t j = 0; j < batch; ++j) {
    const int a = actions[j];
    out.weights.row(a).noalias() -= (step * g[j]) * acts[j][depth - 2].transpose();
    out.bias[a] -= step * g[j];
  }
  for (std::size_t l = depth - 1; l-- > 1;) {
    Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(layers_[l].weights.rows(), layers_[l].weights.cols());
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(layers_[l].bias.size());
    for (std::size_t j = 0; j < batch; ++j) {
      gw.noalias() += deltas[j][l] * acts[j][l - 1].transpose();
      gb += deltas[j][l];
    }
    layers_[l].weights.noalias() -= step * gw;
    layers_[l].bias.noalias() -= step * gb;
  }
  Eigen::VectorXd gb = Eigen::VectorXd::Zero(layers_[0].bias.size());
  for (std::size_t j = 0; j < batch; ++j) {
    for (StateVector::InnerIterator it(states[j]); it; ++it) {
      layers_[0].weights.col(it.index()).noalias() -= (step * it.value()) * deltas[j][0];
    }
    gb += deltas[j][0];
  }
  layers_[0].bias.noalias() -= step * gb;
  return sq * inv_batch;
}

std::vector<double> QNetwork::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    out.insert(out.end(), layer.weights.data(), layer.weights.data() + layer.weights.size());
    out.insert(out.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  return out;
}

void QNetwork::set_flat_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) throw std::invalid_argument("parameter count mismatch");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), layer.weights.size(), layer.weights.data());
    k += static_cast<std::size_t>(layer.weights.size());
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), layer.bias.size(), layer.bias.data());
    k += static_cast<std::size_t>(layer.bias.size());
  }
}

bool QNetwork::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

TargetNetwork make_target(const QNetwork& net) { return {net, 0}; }

void sync_target(const QNetwork& net, TargetNetwork& target) {
  if (!net.same_architecture(target.net)) throw std::invalid_argument("target network architecture mismatch");
  target.net = net;
  target.staleness = 0;
}

double td_target(const Transition& tr, const TargetNetwork& target, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (tr.done) return tr.reward;
  if (tr.next_mask.empty()) throw std::invalid_argument("non-terminal transition with no available next action");
  Eigen::VectorXd q = target.net.forward(tr.next_state);
  return tr.reward + gamma * q[masked_argmax(q, tr.next_mask)];
}

std::vector<double> td_targets(std::span<const Transition> batch, const TargetNetwork& target, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  std::vector<double> y(batch.size());
  std::vector<StateVector> next;
  std::vector<std::size_t> rows;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    y[j] = batch[j].reward;
    if (batch[j].done || gamma == 0.0) continue;
    if (batch[j].next_mask.empty()) throw std::invalid_argument("non-terminal transition with no available next action");
    next.push_back(batch[j].next_state);
    rows.push_back(j);
  }
  if (next.empty()) return y;
  Eigen::MatrixXd q = target.net.forward_batch(next);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& mask = batch[rows[k]].next_mask;
    y[rows[k]] += gamma * q(masked_argmax(q.col(static_cast<Eigen::Index>(k)), mask), static_cast<Eigen::Index>(k));
  }
  return y;
}

double train_step(QNetwork& net, TargetNetwork& target, std::span<const Transition> batch, double gamma,
                  double alpha) {
  if (batch.empty()) throw std::invalid_argument("empty minibatch");
  const std::vector<double> y = td_targets(batch, target, gamma);
  std::vector<StateVector> states;
  std::vector<int> actions;
  states.reserve(batch.size());
  actions.reserve(batch.size());
  for (const auto& tr : batch) {
    states.push_back(tr.state);
    actions.push_back(tr.action);
  }
  const double mse = net.sgd_step(states, actions, y, alpha);
  ++target.staleness;
  return mse;
}

void write_qnet(std::ostream& out, const QNetwork& net) {
  binary::write_magic(out, kQnetMagic, kQnetVersion);
  binary::write<std::uint32_t>(out, net.activation() == Activation::Relu ? 0u : 1u);
  binary::write<std::uint64_t>(out, net.layer_sizes().size());
  for (int s : net.layer_sizes()) binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(s));
  for (const auto& layer : net.layers()) {
    RowMajor w = layer.weights;
    binary::write_array(out, w.data(), static_cast<std::size_t>(w.size()));
    binary::write_array(out, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
}

QNetwork read_qnet(std::istream& in) {
  auto version = binary::expect_magic(in, kQnetMagic);
  if (version != kQnetVersion) throw binary::FormatError("unsupported Q-network checkpoint version");
  auto act_code = binary::read<std::uint32_t>(in);
  if (act_code > 1) throw binary::FormatError("unknown activation code");
  auto count = binary::read<std::uint64_t>(in);
  if (count < 2 || count > 64) throw binary::FormatError("implausible layer count");
  std::vector<int> sizes;
  for (std::uint64_t k = 0; k < count; ++k) sizes.push_back(static_cast<int>(binary::read<std::uint64_t>(in)));
  QNetwork net = QNetwork::init(sizes, 0, act_code == 0 ? Activation::Relu : Activation::Tanh);
  for (auto& layer : net.layers()) {
    RowMajor w(layer.weights.rows(), layer.weights.cols());
    binary::read_array(in, w.data(), static_cast<std::size_t>(w.size()));
    layer.weights = w;
    binary::read_array(in, layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return net;
}

void save_qnet_checkpoint(const QNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_qnet(out, net);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

QNetwork load_qnet_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_qnet(in);
}

void write_qnet_manifest(const QnetManifest& manifest, const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  auto exact = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  tree.put("qnet.seed", manifest.seed);
  tree.put("qnet.steps_trained", manifest.steps_trained);
  tree.put("qnet.sync_period", manifest.sync_period);
  tree.put("qnet.gamma", exact(manifest.gamma));
  tree.put("qnet.alpha", exact(manifest.alpha));
  boost::property_tree::write_ini(path.string(), tree);
}

QnetManifest read_qnet_manifest(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  boost::property_tree::read_ini(path.string(), tree);
  return {tree.get<std::uint64_t>("qnet.seed"), tree.get<std::int64_t>("qnet.steps_trained"),
          tree.get<int>("qnet.sync_period"), tree.get<double>("qnet.gamma"), tree.get<double>("qnet.alpha")};
}

}  // namespace cfrl
