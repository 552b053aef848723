#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clinpath/types.hpp"

namespace clinpath::nnet {

enum class Activation { Linear, Tanh };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

enum class LossKind { MeanSquaredError, SoftmaxCrossEntropy };

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::Tanh;
};

// Plain feedforward stack. Samples are rows; forward/backward run batched
// through Eigen GEMMs. For SoftmaxCrossEntropy the last layer emits raw
// scores and softmax is folded into the loss.
struct Mlp {
  std::vector<Layer> layers;
  LossKind loss = LossKind::MeanSquaredError;

  int input_dim() const { return static_cast<int>(layers.front().weights.cols()); }
  int output_dim() const { return static_cast<int>(layers.back().weights.rows()); }

  Matrix forward(const Matrix& x) const;          // n x out (raw scores)
  Matrix predict_proba(const Matrix& x) const;    // softmax over forward()
  Vector forward_one(const Vector& x) const;
  // activations after each layer given x up to and including layer `upto`
  Matrix forward_through(const Matrix& x, std::size_t upto) const;

  double loss_value(const Matrix& x, const Matrix& targets) const;
};

// Glorot-style scaled-uniform weights, zero biases.
Mlp make_mlp(const std::vector<int>& layer_sizes, const std::vector<Activation>& activations,
             LossKind loss, std::uint64_t seed);

struct Gradients {
  std::vector<Matrix> d_weights;
  std::vector<Vector> d_bias;
};

// Full analytic gradient of the loss over the given batch; returns the loss.
double loss_and_gradients(const Mlp& net, const Matrix& x, const Matrix& targets, Gradients& grads);

struct SgdConfig {
  int epochs = 100;
  double learning_rate = 0.05;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

// Mini-batch gradient descent; deterministic per seed. Returns the
// full-dataset loss curve, index 0 holding the pre-training loss. Throws if
// the loss goes non-finite.
std::vector<double> train_sgd(Mlp& net, const Matrix& x, const Matrix& targets,
                              const SgdConfig& config);

Matrix softmax_rows(const Matrix& scores);

std::string to_json(const Mlp& net);
Mlp mlp_from_json(const std::string& text);

}  // namespace clinpath::nnet
