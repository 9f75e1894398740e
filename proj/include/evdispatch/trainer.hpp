#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "evdispatch/envapi.hpp"
#include "evdispatch/learning.hpp"
#include "evdispatch/policy.hpp"
#include "evdispatch/qnetwork.hpp"

namespace evdispatch {

struct TrainConfig {
  double gamma = 0.99;
  AdamConfig adam;
  std::size_t batch = 32;
  std::size_t buffer_capacity = 10000;
  std::int64_t target_sync = 8000;  // gradient steps between target refreshes
  double xi_start = 1.0;
  double xi_end = 0.1;
  double xi_anneal_fraction = 0.8;  // of max_episodes * expected_steps_per_episode
  int max_episodes = 50;
  int expected_steps_per_episode = 10;
  double grad_clip_norm = 10.0;  // <= 0 disables clipping
  int updates_per_step = 1;
  std::vector<std::size_t> hidden{512, 256};
  bool prioritized = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
  /// Linear schedule by environment step, flat at xi_end after the anneal window.
  double xi_at(std::int64_t env_step) const;
};

struct EpisodeMetrics {
  int episode = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  double t_travel = 0.0;
  double reward = 0.0;  // undiscounted return
  bool horizon_expired = false;
  double mean_loss = 0.0;  // over this episode's gradient steps, 0 when none ran
  double xi = 0.0;         // exploration rate at the episode's last decision
  std::int64_t gradient_steps = 0;  // cumulative
};

struct TrainResult {
  QNetwork params;
  AdamState optimizer;
  std::vector<EpisodeMetrics> episodes;
  std::int64_t gradient_steps = 0;
  std::int64_t env_steps = 0;
  std::int64_t target_syncs = 0;
  std::size_t replay_size = 0;
};

struct TrainHooks {
  /// Called after every gradient step (and any sync it triggered).
  std::function<void(std::int64_t step, const QNetwork& live, const TargetNetwork& target)> on_gradient_step;
  /// Called with each minibatch and its bootstrapped targets before the update.
  std::function<void(std::int64_t step, const Batch& batch, const std::vector<double>& y,
                     const QNetwork& live, const TargetNetwork& target)>
      on_targets;
};

/// Seed of episode `k` in a run seeded with `run_seed`.
std::uint64_t episode_seed(std::uint64_t run_seed, int k);

/// Experience-replay Q-learning. Architecture::dqn uses max-over-target bootstrapping;
/// Architecture::dueling uses the dueling network with double-Q targets.
/// The env configuration is taken from `base` with the seed replaced per episode.
TrainResult train(DispatchEnv& env, const EpisodeConfig& base, const TrainConfig& cfg,
                  Architecture arch, const TrainHooks& hooks = {});

/// Greedy (xi = 0) dispatcher over frozen Q-network parameters.
class QDispatcher final : public Dispatcher {
 public:
  explicit QDispatcher(QNetwork params) : params_(std::move(params)) {}
  ActionId act(const Observation& obs) override;
  const QNetwork& params() const { return params_; }

 private:
  QNetwork params_;
};

}  // namespace evdispatch
