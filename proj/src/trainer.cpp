#include "evdispatch/trainer.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "evdispatch/error.hpp"
#include "evdispatch/replay.hpp"
#include "evdispatch/seeding.hpp"

namespace evdispatch {

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (buffer_capacity < batch) throw ConfigError("replay capacity must be at least the batch size");
  if (target_sync <= 0) throw ConfigError("target sync period must be positive");
  if (!(xi_start >= 0.0 && xi_start <= 1.0 && xi_end >= 0.0 && xi_end <= 1.0))
    throw ConfigError("exploration rates must lie in [0, 1]");
  if (!(xi_anneal_fraction > 0.0 && xi_anneal_fraction <= 1.0))
    throw ConfigError("anneal fraction must lie in (0, 1]");
  if (max_episodes <= 0) throw ConfigError("max_episodes must be positive");
  if (expected_steps_per_episode <= 0) throw ConfigError("expected steps per episode must be positive");
  if (updates_per_step <= 0) throw ConfigError("updates per step must be positive");
  for (std::size_t h : hidden)
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
}

double TrainConfig::xi_at(std::int64_t env_step) const {
  const double window = xi_anneal_fraction * static_cast<double>(max_episodes) *
                        static_cast<double>(expected_steps_per_episode);
  const double frac = std::min(1.0, static_cast<double>(env_step) / window);
  return xi_start + (xi_end - xi_start) * frac;
}

std::uint64_t episode_seed(std::uint64_t run_seed, int k) {
  return derive_seed({run_seed, 0x65706973ULL, static_cast<std::uint64_t>(k)});
}

TrainResult train(DispatchEnv& env, const EpisodeConfig& base, const TrainConfig& cfg,
                  Architecture arch, const TrainHooks& hooks) {
  cfg.validate();
  const auto m = static_cast<std::size_t>(env.num_actions());
  if (arch == Architecture::dueling && cfg.hidden.empty())
    throw ConfigError("the dueling architecture needs at least one hidden layer");

  std::mt19937_64 rng(derive_seed({cfg.seed, 0x6e657473ULL}));
  TrainResult out;
  out.params = QNetwork::make(arch, env.observation_size(), m, cfg.hidden, rng);
  out.optimizer = AdamState::for_params(out.params);
  TargetNetwork target(out.params);
  ReplayBuffer buffer(cfg.buffer_capacity, cfg.prioritized);

  auto gradient_step = [&]() -> double {
    const auto slots = buffer.sample(cfg.batch, rng);
    const Batch b = Batch::gather(buffer, slots);
    const std::vector<double> y = arch == Architecture::dqn
                                      ? dqn_target(b, cfg.gamma, target)
                                      : ddqn_target(b, cfg.gamma, out.params, target);
    if (hooks.on_targets) hooks.on_targets(out.gradient_steps, b, y, out.params, target);
    LossAndGrad lg = loss_and_gradients(out.params, b, y);
    clip_global_norm(lg.grads, cfg.grad_clip_norm);
    adam_step(out.params, lg.grads, out.optimizer, cfg.adam);
    if (buffer.prioritized()) {
      std::vector<double> td(b.size);
      for (std::size_t k = 0; k < b.size; ++k) td[k] = lg.predicted[k] - y[k];
      buffer.update_priorities(slots, td);
    }
    ++out.gradient_steps;
    if (++target.steps_since_sync >= cfg.target_sync) {
      target.sync(out.params);
      ++out.target_syncs;
    }
    if (hooks.on_gradient_step) hooks.on_gradient_step(out.gradient_steps, out.params, target);
    return lg.loss;
  };

  for (int ep = 0; ep < cfg.max_episodes; ++ep) {
    EpisodeMetrics row;
    row.episode = ep;
    row.seed = episode_seed(cfg.seed, ep);
    EpisodeConfig ecfg = base;
    ecfg.seed = row.seed;
    double loss_sum = 0.0;
    std::int64_t loss_n = 0;
    try {
      Observation obs = env.reset(ecfg);
      for (bool done = false; !done;) {
        row.xi = cfg.xi_at(out.env_steps);
        const auto q = out.params.forward(obs.features);
        const ActionId a = epsilon_greedy(q, row.xi, rng);
        StepResult res = env.act_and_step(a);
        ++out.env_steps;
        ++row.steps;
        row.reward += res.reward;
        done = res.done;
        if (done) {
          row.t_travel = res.info.t_travel;
          row.horizon_expired = res.info.horizon_expired;
        }
        buffer.push({obs.features, a, res.reward, res.obs.features, res.done});
        obs = std::move(res.obs);
        if (buffer.size() >= cfg.batch) {
          for (int u = 0; u < cfg.updates_per_step; ++u) {
            loss_sum += gradient_step();
            ++loss_n;
          }
        }
      }
    } catch (const ConfigError& e) {
      throw ConfigError("episode " + std::to_string(ep) + ": " + e.what());
    } catch (const ContractError& e) {
      throw ContractError("episode " + std::to_string(ep) + ": " + e.what());
    } catch (const std::exception& e) {
      throw std::runtime_error("episode " + std::to_string(ep) + ": " + e.what());
    }
    row.mean_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0;
    row.gradient_steps = out.gradient_steps;
    out.episodes.push_back(row);
  }
  out.replay_size = buffer.size();
  return out;
}

ActionId QDispatcher::act(const Observation& obs) { return argmax(params_.forward(obs.features)); }

}  // namespace evdispatch
