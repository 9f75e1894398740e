#include "evdispatch/learning.hpp"

#include <algorithm>
#include <cmath>

#include "evdispatch/error.hpp"
#include "evdispatch/policy.hpp"

namespace evdispatch {

namespace {

void append(Batch& b, const Transition& t) {
  if (b.size == 0) b.state_dim = t.state.size();
  EVD_REQUIRE(t.state.size() == b.state_dim && t.next_state.size() == b.state_dim,
              "transition state dimension mismatch");
  b.states.insert(b.states.end(), t.state.begin(), t.state.end());
  b.next_states.insert(b.next_states.end(), t.next_state.begin(), t.next_state.end());
  b.actions.push_back(t.action);
  b.rewards.push_back(t.reward);
  b.done.push_back(t.done ? 1 : 0);
  b.weights.push_back(1.0);
  ++b.size;
}

}  // namespace

Batch Batch::gather(const ReplayBuffer& buffer, std::span<const std::size_t> slots) {
  Batch b;
  for (std::size_t s : slots) append(b, buffer.slot(s));
  if (buffer.prioritized() && !slots.empty()) {
    // Importance weights (N * P)^-beta normalized by their maximum, beta = 0.4.
    double max_w = 0.0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      b.weights[k] = std::pow(static_cast<double>(buffer.size()) * buffer.probability(slots[k]), -0.4);
      max_w = std::max(max_w, b.weights[k]);
    }
    for (double& w : b.weights) w /= max_w;
  }
  return b;
}

Batch Batch::from(std::span<const Transition> transitions) {
  Batch b;
  for (const auto& t : transitions) append(b, t);
  return b;
}

std::vector<double> dqn_target(const Batch& batch, double gamma, const TargetNetwork& target) {
  EVD_REQUIRE(batch.size > 0, "empty batch");
  ForwardCache next;
  target.params.forward(batch.next_states, batch.size, next);
  const std::size_t m = target.params.actions();
  std::vector<double> y(batch.size);
  for (std::size_t n = 0; n < batch.size; ++n) {
    if (batch.done[n]) {
      y[n] = batch.rewards[n];
      continue;
    }
    const auto row = std::span<const double>(next.q).subspan(n * m, m);
    y[n] = batch.rewards[n] + gamma * *std::max_element(row.begin(), row.end());
  }
  return y;
}

std::vector<double> ddqn_target(const Batch& batch, double gamma, const QNetwork& live,
                                const TargetNetwork& target) {
  EVD_REQUIRE(batch.size > 0, "empty batch");
  ForwardCache live_next, target_next;
  live.forward(batch.next_states, batch.size, live_next);
  target.params.forward(batch.next_states, batch.size, target_next);
  const std::size_t m = live.actions();
  std::vector<double> y(batch.size);
  for (std::size_t n = 0; n < batch.size; ++n) {
    if (batch.done[n]) {
      y[n] = batch.rewards[n];
      continue;
    }
    const auto a = static_cast<std::size_t>(argmax(std::span<const double>(live_next.q).subspan(n * m, m)));
    y[n] = batch.rewards[n] + gamma * target_next.q[n * m + a];
  }
  return y;
}

double mse_loss(std::span<const double> predicted, std::span<const double> targets) {
  EVD_REQUIRE(!predicted.empty(), "mse_loss of an empty batch");
  EVD_REQUIRE(predicted.size() == targets.size(), "prediction and target lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - targets[i];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

LossAndGrad loss_and_gradients(const QNetwork& net, const Batch& batch, std::span<const double> y) {
  EVD_REQUIRE(batch.size > 0, "empty batch");
  EVD_REQUIRE(y.size() == batch.size, "target count differs from batch size");
  ForwardCache cache;
  net.forward(batch.states, batch.size, cache);
  const std::size_t m = net.actions();
  LossAndGrad out;
  out.predicted.resize(batch.size);
  std::vector<double> dq(batch.size * m, 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size);
  double loss = 0.0;
  for (std::size_t n = 0; n < batch.size; ++n) {
    const auto a = static_cast<std::size_t>(batch.actions[n]);
    EVD_REQUIRE(a < m, "action index outside the network output");
    const double q = cache.q[n * m + a];
    out.predicted[n] = q;
    const double diff = q - y[n];
    loss += batch.weights[n] * diff * diff;
    dq[n * m + a] = 2.0 * batch.weights[n] * diff * inv;
  }
  out.loss = loss * inv;
  out.grads = net.zeros_like();
  net.backward(cache, dq, out.grads);
  return out;
}

double clip_global_norm(QNetwork& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

void adam_step(QNetwork& params, const QNetwork& grads, AdamState& state, const AdamConfig& cfg) {
  auto p_layers = params.layers();
  const auto g_layers = grads.layers();
  auto m_layers = state.m.layers();
  auto v_layers = state.v.layers();
  EVD_REQUIRE(g_layers.size() == p_layers.size() && m_layers.size() == p_layers.size(),
              "optimizer state is not congruent with the parameters");
  state.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    EVD_REQUIRE(p.size() == g.size() && p.size() == m.size(), "tensor shapes differ");
#pragma omp simd
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  };
  for (std::size_t l = 0; l < p_layers.size(); ++l) {
    update(p_layers[l].weights, g_layers[l].weights, m_layers[l].weights, v_layers[l].weights);
    update(p_layers[l].bias, g_layers[l].bias, m_layers[l].bias, v_layers[l].bias);
  }
}

}  // namespace evdispatch
