#include "evdispatch/qnetwork.hpp"

#include <cmath>
#include <numeric>

#include "evdispatch/error.hpp"
#include "evdispatch/kernels.hpp"

namespace evdispatch {

const char* to_string(Architecture a) { return a == Architecture::dqn ? "dqn" : "dueling"; }

QNetwork QNetwork::make(Architecture arch, std::size_t state_dim, std::size_t actions,
                        std::span<const std::size_t> hidden, std::mt19937_64& rng) {
  EVD_REQUIRE(state_dim > 0 && actions > 0, "network dimensions must be positive");
  EVD_REQUIRE(!hidden.empty() || arch == Architecture::dqn, "dueling network needs a hidden trunk");
  std::vector<DenseLayer> layers;
  std::size_t width = state_dim;
  for (std::size_t h : hidden) {
    EVD_REQUIRE(h > 0, "hidden layer width must be positive");
    layers.emplace_back(width, h);
    width = h;
  }
  if (arch == Architecture::dueling) layers.emplace_back(width, 1);
  layers.emplace_back(width, actions);

  for (auto& l : layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : l.weights) w = u(rng);
    for (double& b : l.bias) b = u(rng);
  }
  return from_layers(arch, std::move(layers));
}

QNetwork QNetwork::from_layers(Architecture arch, std::vector<DenseLayer> layers) {
  const std::size_t heads = arch == Architecture::dueling ? 2 : 1;
  EVD_REQUIRE(layers.size() >= heads, "too few layers for the architecture");
  for (const auto& l : layers)
    EVD_REQUIRE(l.weights.size() == l.in * l.out && l.bias.size() == l.out,
                "layer parameter sizes do not match its shape");
  const std::size_t trunk = layers.size() - heads;
  for (std::size_t i = 1; i <= trunk && i < layers.size(); ++i) {
    if (i < trunk || arch == Architecture::dqn)
      EVD_REQUIRE(layers[i].in == layers[i - 1].out, "layer shapes do not chain");
  }
  if (arch == Architecture::dueling) {
    const std::size_t feat = trunk == 0 ? layers[0].in : layers[trunk - 1].out;
    EVD_REQUIRE(layers[trunk].in == feat && layers[trunk + 1].in == feat,
                "dueling heads must read the trunk output");
    EVD_REQUIRE(layers[trunk].out == 1, "value head must have one output");
  }
  QNetwork net;
  net.arch_ = arch;
  net.layers_ = std::move(layers);
  return net;
}

std::size_t QNetwork::trunk_depth() const {
  return layers_.size() - (arch_ == Architecture::dueling ? 2 : 1);
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

QNetwork QNetwork::zeros_like() const {
  QNetwork z;
  z.arch_ = arch_;
  for (const auto& l : layers_) z.layers_.emplace_back(l.in, l.out);
  return z;
}

std::vector<double> dueling_combine(double value, std::span<const double> advantage) {
  const double mean =
      std::accumulate(advantage.begin(), advantage.end(), 0.0) / static_cast<double>(advantage.size());
  std::vector<double> q(advantage.size());
  for (std::size_t a = 0; a < q.size(); ++a) q[a] = value + advantage[a] - mean;
  return q;
}

std::vector<double> QNetwork::forward(std::span<const double> state) const {
  ForwardCache cache;
  forward(state, 1, cache);
  return cache.q;
}

void QNetwork::forward(std::span<const double> states, std::size_t batch, ForwardCache& cache) const {
  EVD_REQUIRE(states.size() == batch * state_dim(),
              "state dimension mismatch: expected " + std::to_string(state_dim()));
  cache.batch = batch;
  cache.input.assign(states.begin(), states.end());
  const std::size_t trunk = trunk_depth();
  cache.hidden.resize(trunk);
  std::span<const double> x = cache.input;
  for (std::size_t i = 0; i < trunk; ++i) {
    const DenseLayer& l = layers_[i];
    cache.hidden[i].resize(batch * l.out);
    kernels::omp::dense_forward(x, l.weights, l.bias, {batch, l.in, l.out}, cache.hidden[i]);
    kernels::relu_inplace(cache.hidden[i]);
    x = cache.hidden[i];
  }
  const std::size_t m = actions();
  cache.q.resize(batch * m);
  if (arch_ == Architecture::dqn) {
    const DenseLayer& l = layers_.back();
    kernels::omp::dense_forward(x, l.weights, l.bias, {batch, l.in, l.out}, cache.q);
    return;
  }
  const DenseLayer& v = layers_[trunk];
  const DenseLayer& a = layers_[trunk + 1];
  cache.value.resize(batch);
  cache.advantage.resize(batch * m);
  kernels::omp::dense_forward(x, v.weights, v.bias, {batch, v.in, 1}, cache.value);
  kernels::omp::dense_forward(x, a.weights, a.bias, {batch, a.in, m}, cache.advantage);
  for (std::size_t n = 0; n < batch; ++n) {
    auto q = dueling_combine(cache.value[n],
                             std::span<const double>(cache.advantage).subspan(n * m, m));
    std::copy(q.begin(), q.end(), cache.q.begin() + static_cast<std::ptrdiff_t>(n * m));
  }
}

void QNetwork::backward(const ForwardCache& cache, std::span<const double> dq, QNetwork& grads) const {
  const std::size_t batch = cache.batch;
  const std::size_t m = actions();
  EVD_REQUIRE(dq.size() == batch * m, "upstream gradient has the wrong shape");
  EVD_REQUIRE(grads.layers_.size() == layers_.size(), "gradient container is not congruent");
  const std::size_t trunk = trunk_depth();
  std::span<const double> feat = trunk == 0 ? std::span<const double>(cache.input)
                                            : std::span<const double>(cache.hidden[trunk - 1]);
  const std::size_t feat_dim = trunk == 0 ? state_dim() : layers_[trunk - 1].out;
  std::vector<double> dfeat(batch * feat_dim);

  if (arch_ == Architecture::dqn) {
    const DenseLayer& l = layers_.back();
    DenseLayer& g = grads.layers_.back();
    kernels::omp::dense_backward_params(dq, feat, {batch, l.in, l.out}, g.weights, g.bias);
    kernels::omp::dense_backward_input(dq, l.weights, {batch, l.in, l.out}, dfeat);
  } else {
    // dQ_a/dV = 1, dQ_a/dA_k = [a == k] - 1/m
    std::vector<double> dv(batch), da(batch * m);
    for (std::size_t n = 0; n < batch; ++n) {
      double sum = 0.0;
      for (std::size_t k = 0; k < m; ++k) sum += dq[n * m + k];
      dv[n] = sum;
      for (std::size_t k = 0; k < m; ++k) da[n * m + k] = dq[n * m + k] - sum / static_cast<double>(m);
    }
    const DenseLayer& vl = layers_[trunk];
    const DenseLayer& al = layers_[trunk + 1];
    kernels::omp::dense_backward_params(dv, feat, {batch, vl.in, 1}, grads.layers_[trunk].weights,
                                        grads.layers_[trunk].bias);
    kernels::omp::dense_backward_params(da, feat, {batch, al.in, m}, grads.layers_[trunk + 1].weights,
                                        grads.layers_[trunk + 1].bias);
    std::vector<double> tmp(batch * feat_dim);
    kernels::omp::dense_backward_input(dv, vl.weights, {batch, vl.in, 1}, dfeat);
    kernels::omp::dense_backward_input(da, al.weights, {batch, al.in, m}, tmp);
    for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] += tmp[i];
  }

  std::vector<double> dx;
  for (std::size_t i = trunk; i-- > 0;) {
    const DenseLayer& l = layers_[i];
    kernels::relu_mask(cache.hidden[i], dfeat);
    std::span<const double> x = i == 0 ? std::span<const double>(cache.input)
                                       : std::span<const double>(cache.hidden[i - 1]);
    kernels::omp::dense_backward_params(dfeat, x, {batch, l.in, l.out}, grads.layers_[i].weights,
                                        grads.layers_[i].bias);
    if (i == 0) break;
    dx.resize(batch * l.in);
    kernels::omp::dense_backward_input(dfeat, l.weights, {batch, l.in, l.out}, dx);
    dfeat.swap(dx);
  }
}

double QNetwork::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers_) {
    for (double w : l.weights) s += w * w;
    for (double b : l.bias) s += b * b;
  }
  return s;
}

void QNetwork::scale(double factor) {
  for (auto& l : layers_) {
    for (double& w : l.weights) w *= factor;
    for (double& b : l.bias) b *= factor;
  }
}

}  // namespace evdispatch
