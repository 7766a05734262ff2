#include "ringflow/neural.hpp"

#include <cmath>
#include <stdexcept>

namespace ringflow {

DenseNet make_dense_net(const std::vector<int>& layer_sizes, RngStream& rng) {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("make_dense_net: need at least 2 layer sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw std::invalid_argument("make_dense_net: layer size <= 0");

  DenseNet net;
  net.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor w(static_cast<std::size_t>(fan_in) * fan_out);
    for (auto& x : w) x = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(fan_out, 0.0);
  }
  return net;
}

Tensor net_forward(const DenseNet& net, std::span<const double> x,
                   ForwardCache* cache) {
  if (static_cast<int>(x.size()) != net.input_size())
    throw std::invalid_argument("net_forward: input size mismatch");
  Tensor act(x.begin(), x.end());
  if (cache) {
    cache->inputs.clear();
    cache->inputs.push_back(act);
  }
  const std::size_t layers = net.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = net.layer_sizes[l];
    const int out = net.layer_sizes[l + 1];
    Tensor next(out);
    const Tensor& w = net.weights[l];
    for (int o = 0; o < out; ++o) {
      double z = net.biases[l][o];
      const double* row = &w[static_cast<std::size_t>(o) * in];
      for (int i = 0; i < in; ++i) z += row[i] * act[i];
      next[o] = (l + 1 < layers) ? std::tanh(z) : z;
    }
    act = std::move(next);
    if (cache) cache->inputs.push_back(act);
  }
  return act;
}

NetGradients make_zero_gradients(const DenseNet& net) {
  NetGradients grads;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    grads.weights.emplace_back(net.weights[l].size(), 0.0);
    grads.biases.emplace_back(net.biases[l].size(), 0.0);
  }
  return grads;
}

void zero_gradients(NetGradients& grads) {
  for (auto& t : grads.weights) std::fill(t.begin(), t.end(), 0.0);
  for (auto& t : grads.biases) std::fill(t.begin(), t.end(), 0.0);
}

Tensor net_backward(const DenseNet& net, const ForwardCache& cache,
                    std::span<const double> dy, NetGradients& grads) {
  const std::size_t layers = net.layer_count();
  if (cache.inputs.size() != layers + 1)
    throw std::invalid_argument("net_backward: cache does not match net");
  for (std::size_t l = 0; l <= layers; ++l)
    if (static_cast<int>(cache.inputs[l].size()) != net.layer_sizes[l])
      throw std::invalid_argument("net_backward: cache does not match net");
  if (static_cast<int>(dy.size()) != net.output_size())
    throw std::invalid_argument("net_backward: dy size mismatch");
  if (grads.weights.size() != layers)
    throw std::invalid_argument("net_backward: gradient shape mismatch");

  Tensor delta(dy.begin(), dy.end());
  for (std::size_t l = layers; l-- > 0;) {
    const int in = net.layer_sizes[l];
    const int out = net.layer_sizes[l + 1];
    // Hidden layers apply tanh at their output; fold its derivative in.
    if (l + 1 < layers) {
      const Tensor& a = cache.inputs[l + 1];
      for (int o = 0; o < out; ++o) delta[o] *= 1.0 - a[o] * a[o];
    }
    const Tensor& input = cache.inputs[l];
    Tensor& wgrad = grads.weights[l];
    Tensor& bgrad = grads.biases[l];
    const Tensor& w = net.weights[l];
    Tensor prev(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      bgrad[o] += d;
      double* wrow = &wgrad[static_cast<std::size_t>(o) * in];
      const double* row = &w[static_cast<std::size_t>(o) * in];
      for (int i = 0; i < in; ++i) {
        wrow[i] += d * input[i];
        prev[i] += d * row[i];
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

AdamState make_adam_state(const std::vector<const Tensor*>& params,
                          const AdamConfig& config) {
  AdamState state;
  state.config = config;
  for (const Tensor* p : params) {
    state.m.emplace_back(p->size(), 0.0);
    state.v.emplace_back(p->size(), 0.0);
  }
  return state;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: tensor count mismatch");
  state.t += 1;
  const AdamConfig& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    if (p.size() != g.size() || p.size() != state.m[k].size())
      throw std::invalid_argument("adam_step: tensor shape mismatch");
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw std::runtime_error("adam_step: non-finite gradient");
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= c.step_size * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

namespace {
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
}

double gaussian_log_prob(double mean, double stddev, double x) {
  if (!(stddev > 0.0))
    throw std::invalid_argument("gaussian_log_prob: stddev <= 0");
  const double z = (x - mean) / stddev;
  return -0.5 * z * z - std::log(stddev) - 0.5 * kLogTwoPi;
}

double gaussian_log_prob(std::span<const double> mean,
                         std::span<const double> stddev,
                         std::span<const double> x) {
  if (mean.size() != stddev.size() || mean.size() != x.size())
    throw std::invalid_argument("gaussian_log_prob: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i)
    sum += gaussian_log_prob(mean[i], stddev[i], x[i]);
  return sum;
}

GaussianSample gaussian_sample(double mean, double stddev, RngStream& rng) {
  if (!(stddev >= 0.0))
    throw std::invalid_argument("gaussian_sample: stddev < 0");
  GaussianSample s;
  s.eps = rng.normal();
  s.value = mean + stddev * s.eps;
  return s;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double log_sigmoid(double x) { return -softplus(-x); }

}  // namespace ringflow
