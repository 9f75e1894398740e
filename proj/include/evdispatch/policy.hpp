#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <span>
#include <string_view>

#include "evdispatch/envapi.hpp"

namespace evdispatch {

enum class PolicyKind { random, greedy, dqn, dueling_ddqn };

const char* to_string(PolicyKind k);
/// Throws ConfigError for unknown names.
PolicyKind parse_policy_kind(std::string_view name);

/// Raised when no station is reachable from the current position.
class NoActionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Index of the largest value; ties go to the lowest index.
ActionId argmax(std::span<const double> values);

ActionId random_action(int m, std::mt19937_64& rng);

/// Closest station by the distance channel (lowest index on ties).
ActionId greedy_policy(const Observation& obs);

/// Uniform action with probability xi, otherwise argmax of q.
ActionId epsilon_greedy(std::span<const double> q, double xi, std::mt19937_64& rng);

/// Per-episode decision maker used by evaluation.
class Dispatcher {
 public:
  virtual ~Dispatcher() = default;
  virtual void begin_episode() {}
  virtual ActionId act(const Observation& obs) = 0;
};

/// Draws one station when the target enters the network and repeats it for the whole episode.
class RandomDispatcher final : public Dispatcher {
 public:
  RandomDispatcher(int m, std::uint64_t seed) : m_(m), rng_(seed) {}
  void begin_episode() override { choice_.reset(); }
  ActionId act(const Observation& obs) override;

 private:
  int m_;
  std::mt19937_64 rng_;
  std::optional<ActionId> choice_;
};

class GreedyDispatcher final : public Dispatcher {
 public:
  ActionId act(const Observation& obs) override { return greedy_policy(obs); }
};

}  // namespace evdispatch
