#pragma once

#include <span>
#include <vector>

#include "ringflow/rng.hpp"

namespace ringflow {

using Tensor = std::vector<double>;

// Fully connected net: tanh hidden layers, linear output. weights[l] is
// row-major (out x in).
struct DenseNet {
  std::vector<int> layer_sizes;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

// Glorot-uniform weights, zero biases.
DenseNet make_dense_net(const std::vector<int>& layer_sizes, RngStream& rng);

// Per-layer input activations recorded by the forward pass; inputs[0] is x
// and inputs[L] is the network output.
struct ForwardCache {
  std::vector<Tensor> inputs;
};

Tensor net_forward(const DenseNet& net, std::span<const double> x,
                   ForwardCache* cache = nullptr);

struct NetGradients {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

NetGradients make_zero_gradients(const DenseNet& net);
void zero_gradients(NetGradients& grads);

// Reverse-mode pass. Accumulates parameter gradients into `grads` and
// returns the gradient with respect to the input. The cache must come from
// a forward call on the same net.
Tensor net_backward(const DenseNet& net, const ForwardCache& cache,
                    std::span<const double> dy, NetGradients& grads);

struct AdamConfig {
  double step_size = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long long t = 0;
  AdamConfig config;
};

AdamState make_adam_state(const std::vector<const Tensor*>& params,
                          const AdamConfig& config);

// Standard bias-corrected adaptive-moment update. Throws on non-finite
// gradients (training divergence).
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state);

double gaussian_log_prob(double mean, double stddev, double x);
double gaussian_log_prob(std::span<const double> mean,
                         std::span<const double> stddev,
                         std::span<const double> x);

struct GaussianSample {
  double value = 0.0;
  double eps = 0.0;  // retained so gradients can flow through mean and std
};

GaussianSample gaussian_sample(double mean, double stddev, RngStream& rng);

double sigmoid(double x);
double softplus(double x);
// log sigmoid(x), stable for large |x|
double log_sigmoid(double x);

}  // namespace ringflow
