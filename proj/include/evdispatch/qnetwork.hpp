#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace evdispatch {

enum class Architecture { dqn, dueling };

const char* to_string(Architecture a);

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // row-major [out x in]
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_, std::size_t out_)
      : in(in_), out(out_), weights(in_ * out_, 0.0), bias(out_, 0.0) {}

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Intermediate activations of a batched forward pass, kept for backward().
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<double> input;
  std::vector<std::vector<double>> hidden;  // post-rectifier trunk outputs
  std::vector<double> value;                // dueling: [batch]
  std::vector<double> advantage;            // dueling: [batch x m]
  std::vector<double> q;                    // [batch x m]
};

/// Q-value approximator.
///
/// dqn:     state -> hidden (ReLU) ... -> m linear outputs.
/// dueling: state -> hidden (ReLU) ... -> {value head (1), advantage head (m)},
///          Q = V + A - mean(A).
///
/// Layers are stored trunk first; the dueling variant ends with the value head
/// followed by the advantage head. The same type also carries gradients and
/// optimizer moments, which share the parameter shapes.
class QNetwork {
 public:
  QNetwork() = default;

  /// Uniform(+-1/sqrt(fan_in)) initialization for weights and biases.
  static QNetwork make(Architecture arch, std::size_t state_dim, std::size_t actions,
                       std::span<const std::size_t> hidden, std::mt19937_64& rng);
  static QNetwork from_layers(Architecture arch, std::vector<DenseLayer> layers);

  Architecture arch() const { return arch_; }
  std::size_t state_dim() const { return layers_.front().in; }
  std::size_t actions() const { return layers_.back().out; }
  std::size_t trunk_depth() const;
  std::span<const DenseLayer> layers() const { return layers_; }
  std::span<DenseLayer> layers() { return layers_; }
  std::size_t parameter_count() const;

  QNetwork zeros_like() const;

  /// Single-state forward pass.
  std::vector<double> forward(std::span<const double> state) const;
  /// Batched forward pass over row-major states [batch x state_dim].
  void forward(std::span<const double> states, std::size_t batch, ForwardCache& cache) const;

  /// Accumulates parameter gradients for an upstream gradient dL/dQ of shape [batch x m].
  void backward(const ForwardCache& cache, std::span<const double> dq, QNetwork& grads) const;

  double squared_norm() const;
  void scale(double factor);

  friend bool operator==(const QNetwork&, const QNetwork&) = default;

 private:
  Architecture arch_ = Architecture::dqn;
  std::vector<DenseLayer> layers_;
};

/// Q = V + A - mean(A).
std::vector<double> dueling_combine(double value, std::span<const double> advantage);

}  // namespace evdispatch
