#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evdispatch/qnetwork.hpp"
#include "evdispatch/replay.hpp"

namespace evdispatch {

/// Minibatch in struct-of-arrays form; states are row-major [size x state_dim].
struct Batch {
  std::size_t size = 0;
  std::size_t state_dim = 0;
  std::vector<double> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<double> next_states;
  std::vector<char> done;
  std::vector<double> weights;  // importance weights, 1 for uniform replay

  static Batch gather(const ReplayBuffer& buffer, std::span<const std::size_t> slots);
  static Batch from(std::span<const Transition> transitions);
};

/// Frozen parameter snapshot used for bootstrapped targets.
struct TargetNetwork {
  QNetwork params;
  std::int64_t steps_since_sync = 0;

  explicit TargetNetwork(QNetwork p) : params(std::move(p)) {}
  void sync(const QNetwork& live) {
    params = live;
    steps_since_sync = 0;
  }
};

/// y = r for terminal transitions, else r + gamma * max_a Q_target(s', a).
std::vector<double> dqn_target(const Batch& batch, double gamma, const TargetNetwork& target);

/// y = r + gamma * Q_target(s', argmax_a Q_live(s', a)); terminal branch as dqn_target.
std::vector<double> ddqn_target(const Batch& batch, double gamma, const QNetwork& live,
                                const TargetNetwork& target);

/// Mean of squared differences. Throws ContractError on empty or mismatched input.
double mse_loss(std::span<const double> predicted, std::span<const double> targets);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> predicted;  // Q(s, a) per sample
  QNetwork grads;
};

/// Weighted MSE between Q(s, a) and fixed targets, with exact gradients for every
/// parameter. Only the output for the taken action receives error signal.
LossAndGrad loss_and_gradients(const QNetwork& net, const Batch& batch, std::span<const double> y);

/// Rescales gradients so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_global_norm(QNetwork& grads, double max_norm);

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  QNetwork m;
  QNetwork v;
  std::int64_t t = 0;

  static AdamState for_params(const QNetwork& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// Bias-corrected first/second moment update.
void adam_step(QNetwork& params, const QNetwork& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace evdispatch
