#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topo/common.hpp"
#include "topo/linalg.hpp"

namespace topo {

// Fully-connected ReLU classifier with a linear output layer. Row-vector
// convention: activations are n x width and layer i maps h_{i+1} =
// relu(h_i W_i + b_i) with W_i of shape widths[i] x widths[i+1]. The last
// layer omits the ReLU (logits).
struct DenseNet {
  std::vector<int> widths;                  // layer widths, including input and output
  std::vector<Matrix> weights;              // widths.size()-1 matrices
  std::vector<std::vector<double>> biases;  // matching bias vectors
  uint64_t init_seed = 0;

  int num_weight_layers() const { return static_cast<int>(weights.size()); }
  int num_layers() const { return static_cast<int>(widths.size()); }  // activation layers
};

// Uniform +-1/sqrt(fan_in) for weights and biases, deterministic in `seed`.
DenseNet init_net(const std::vector<int>& widths, uint64_t seed);

// Per-layer activations of a batch plus the per-node mean/std used by the
// topological feature extraction. Layer 0 is the input itself; the last
// layer holds the logits.
struct ActivationStats {
  std::vector<Matrix> activations;           // one n x widths[l] matrix per layer
  std::vector<std::vector<double>> mu;       // per-layer per-node mean
  std::vector<std::vector<double>> sigma;    // per-layer per-node population std
  int samples() const { return activations.empty() ? 0 : activations.front().rows; }
  const Matrix& logits() const { return activations.back(); }
};

ActivationStats forward(const DenseNet& net, const Matrix& x);

struct NodeRef {
  int layer = 0;
  int node = 0;
};

// Population covariance of the activation vectors of two tracked nodes.
double covariance(const ActivationStats& stats, NodeRef a, NodeRef b);

struct CrossEntropy {
  double loss = 0.0;
  Matrix grad;  // d(mean loss)/d(logits) = (softmax - onehot)/n
};

CrossEntropy cross_entropy(const Matrix& logits, const std::vector<int>& labels);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

Gradients zero_gradients(const DenseNet& net);
void axpy_gradients(double a, const Gradients& x, Gradients& y);  // y += a*x

// Exact gradients of the mean cross-entropy (plus optional externally
// supplied parameter gradients, e.g. from a topological loss term) with
// respect to every weight and bias.
Gradients backward(const DenseNet& net, const Matrix& x, const std::vector<int>& labels,
                   const Gradients* extra = nullptr);
Gradients backward_cached(const DenseNet& net, const ActivationStats& cache,
                          const std::vector<int>& labels, const Gradients* extra = nullptr);

// Backpropagates gradients that arrive on the per-node activation means and
// stds (one vector per layer, layer 0 ignored for parameters) down to the
// weights and biases. Nodes with zero std contribute nothing through sigma.
Gradients stats_param_backward(const DenseNet& net, const ActivationStats& cache,
                               const std::vector<std::vector<double>>& mu_grad,
                               const std::vector<std::vector<double>>& sigma_grad);

struct TrainConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;  // 0 = full batch
  int epochs = 0;       // mutually exclusive with steps
  int steps = 0;
  uint64_t seed = 0;    // shuffle seed
};

struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<std::vector<double>> m_b, v_b;
  long step = 0;
};

AdamState init_adam(const DenseNet& net);
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state, const TrainConfig& cfg);

// Conventional (shuffled mini-batch, `epochs`) or small-data (full-batch,
// `steps`) training. Throws if the loss goes non-finite.
void train(DenseNet& net, const Matrix& x, const std::vector<int>& y, const TrainConfig& cfg);

double accuracy(const DenseNet& net, const Matrix& x, const std::vector<int>& y);

// Versioned textual checkpoint (layer widths, row-major weights, biases,
// init seed). Stable across releases; refuses unknown versions.
void save_checkpoint(const DenseNet& net, const std::string& path);
DenseNet load_checkpoint(const std::string& path);

}  // namespace topo
