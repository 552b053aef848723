#include "clinpath/mlp.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/rng.hpp"

namespace clinpath::nnet {

using nlohmann::json;

const char* to_string(Activation a) {
  return a == Activation::Linear ? "linear" : "tanh";
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

namespace {

Matrix apply_activation(Matrix z, Activation act) {
  if (act == Activation::Tanh) return z.array().tanh().matrix();
  return z;
}

}  // namespace

Matrix Mlp::forward(const Matrix& x) const {
  Matrix a = x;
  for (const Layer& layer : layers) {
    a = apply_activation(((a * layer.weights.transpose()).rowwise() + layer.bias.transpose()),
                         layer.activation);
  }
  return a;
}

Matrix Mlp::forward_through(const Matrix& x, std::size_t upto) const {
  Matrix a = x;
  for (std::size_t i = 0; i <= upto && i < layers.size(); ++i) {
    const Layer& layer = layers[i];
    a = apply_activation(((a * layer.weights.transpose()).rowwise() + layer.bias.transpose()),
                         layer.activation);
  }
  return a;
}

Vector Mlp::forward_one(const Vector& x) const {
  Matrix row = x.transpose();
  return forward(row).row(0).transpose();
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix out = scores;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix Mlp::predict_proba(const Matrix& x) const {
  return softmax_rows(forward(x));
}

double Mlp::loss_value(const Matrix& x, const Matrix& targets) const {
  const Matrix out = forward(x);
  if (loss == LossKind::MeanSquaredError) {
    return (out - targets).array().square().sum() /
           static_cast<double>(out.rows() * out.cols());
  }
  // targets: one-hot rows
  const Matrix probs = softmax_rows(out);
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      if (targets(i, j) > 0.5) total -= std::log(std::max(probs(i, j), 1e-300));
    }
  }
  return total / static_cast<double>(probs.rows());
}

Mlp make_mlp(const std::vector<int>& layer_sizes, const std::vector<Activation>& activations,
             LossKind loss, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least two layer sizes");
  if (activations.size() != layer_sizes.size() - 1) {
    throw std::invalid_argument("make_mlp: one activation per layer transition required");
  }
  Mlp net;
  net.loss = loss;
  Rng rng(seed);
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int fan_in = layer_sizes[i];
    const int fan_out = layer_sizes[i + 1];
    if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("make_mlp: layer sizes must be positive");
    Layer layer;
    layer.activation = activations[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    layer.weights.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = rng.uniform(-limit, limit);
      }
    }
    layer.bias = Vector::Zero(fan_out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

double loss_and_gradients(const Mlp& net, const Matrix& x, const Matrix& targets,
                          Gradients& grads) {
  const std::size_t n_layers = net.layers.size();
  const double batch = static_cast<double>(x.rows());

  // forward pass, keeping activations
  std::vector<Matrix> activations;
  activations.reserve(n_layers + 1);
  activations.push_back(x);
  for (const Layer& layer : net.layers) {
    activations.push_back(apply_activation(
        ((activations.back() * layer.weights.transpose()).rowwise() + layer.bias.transpose()),
        layer.activation));
  }

  const Matrix& out = activations.back();
  double loss;
  Matrix delta;  // dL/dz of the output layer
  if (net.loss == LossKind::MeanSquaredError) {
    const Matrix diff = out - targets;
    loss = diff.array().square().sum() / (batch * static_cast<double>(out.cols()));
    delta = diff * (2.0 / (batch * static_cast<double>(out.cols())));
    if (net.layers.back().activation == Activation::Tanh) {
      delta = delta.cwiseProduct((1.0 - out.array().square()).matrix());
    }
  } else {
    const Matrix probs = softmax_rows(out);
    loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        if (targets(i, j) > 0.5) loss -= std::log(std::max(probs(i, j), 1e-300));
      }
    }
    loss /= batch;
    delta = (probs - targets) / batch;  // output layer must be linear scores
  }

  grads.d_weights.assign(n_layers, Matrix());
  grads.d_bias.assign(n_layers, Vector());
  for (std::size_t li = n_layers; li-- > 0;) {
    const Layer& layer = net.layers[li];
    grads.d_weights[li] = delta.transpose() * activations[li];
    grads.d_bias[li] = delta.colwise().sum().transpose();
    if (li > 0) {
      delta = delta * layer.weights;
      if (net.layers[li - 1].activation == Activation::Tanh) {
        delta = delta.cwiseProduct((1.0 - activations[li].array().square()).matrix());
      }
    }
  }
  return loss;
}

std::vector<double> train_sgd(Mlp& net, const Matrix& x, const Matrix& targets,
                              const SgdConfig& config) {
  if (x.rows() == 0) throw std::invalid_argument("train_sgd: empty training set");
  if (x.rows() != targets.rows()) throw std::invalid_argument("train_sgd: row count mismatch");
  const int n = static_cast<int>(x.rows());
  const int batch_size = std::max(1, std::min(config.batch_size, n));

  Rng rng(config.seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(config.epochs) + 1);
  curve.push_back(net.loss_value(x, targets));

  Gradients grads;
  Matrix bx, bt;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (int start = 0; start < n; start += batch_size) {
      const int count = std::min(batch_size, n - start);
      bx.resize(count, x.cols());
      bt.resize(count, targets.cols());
      for (int i = 0; i < count; ++i) {
        bx.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
        bt.row(i) = targets.row(order[static_cast<std::size_t>(start + i)]);
      }
      loss_and_gradients(net, bx, bt, grads);
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        net.layers[li].weights -= config.learning_rate * grads.d_weights[li];
        net.layers[li].bias -= config.learning_rate * grads.d_bias[li];
      }
    }
    const double epoch_loss = net.loss_value(x, targets);
    if (!std::isfinite(epoch_loss)) {
      throw std::runtime_error("train_sgd: non-finite loss at epoch " + std::to_string(epoch + 1) +
                               " (learning rate " + std::to_string(config.learning_rate) + ")");
    }
    curve.push_back(epoch_loss);
  }
  return curve;
}

std::string to_json(const Mlp& net) {
  json j;
  j["loss"] = net.loss == LossKind::MeanSquaredError ? "mse" : "softmax_cross_entropy";
  json layers = json::array();
  for (const Layer& layer : net.layers) {
    json lj;
    lj["activation"] = to_string(layer.activation);
    lj["rows"] = layer.weights.rows();
    lj["cols"] = layer.weights.cols();
    json w = json::array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
    }
    lj["weights"] = std::move(w);
    json b = json::array();
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) b.push_back(layer.bias(i));
    lj["bias"] = std::move(b);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  return j.dump();
}

Mlp mlp_from_json(const std::string& text) {
  const json j = json::parse(text);
  Mlp net;
  net.loss = j.at("loss").get<std::string>() == "mse" ? LossKind::MeanSquaredError
                                                      : LossKind::SoftmaxCrossEntropy;
  for (const auto& lj : j.at("layers")) {
    Layer layer;
    layer.activation = activation_from_string(lj.at("activation").get<std::string>());
    const Eigen::Index rows = lj.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = lj.at("cols").get<Eigen::Index>();
    layer.weights.resize(rows, cols);
    const auto& w = lj.at("weights");
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        layer.weights(r, c) = w.at(static_cast<std::size_t>(r * cols + c)).get<double>();
      }
    }
    const auto& b = lj.at("bias");
    layer.bias.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) layer.bias(i) = b.at(static_cast<std::size_t>(i)).get<double>();
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace clinpath::nnet
