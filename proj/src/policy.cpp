#include "evdispatch/policy.hpp"

#include "evdispatch/error.hpp"

namespace evdispatch {

const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::random: return "random";
    case PolicyKind::greedy: return "greedy";
    case PolicyKind::dqn: return "dqn";
    case PolicyKind::dueling_ddqn: return "dueling_ddqn";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "random") return PolicyKind::random;
  if (name == "greedy") return PolicyKind::greedy;
  if (name == "dqn") return PolicyKind::dqn;
  if (name == "dueling_ddqn") return PolicyKind::dueling_ddqn;
  throw ConfigError("unknown policy '" + std::string(name) +
                    "' (expected random, greedy, dqn or dueling_ddqn)");
}

ActionId argmax(std::span<const double> values) {
  EVD_REQUIRE(!values.empty(), "argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<ActionId>(best);
}

ActionId random_action(int m, std::mt19937_64& rng) {
  EVD_REQUIRE(m >= 1, "need at least one station");
  return std::uniform_int_distribution<ActionId>(0, m - 1)(rng);
}

ActionId greedy_policy(const Observation& obs) {
  std::optional<std::size_t> best;
  const auto d = obs.d();
  for (std::size_t j = 0; j < obs.stations(); ++j) {
    if (!obs.reachable(j)) continue;
    if (!best || d[j] < d[*best]) best = j;
  }
  if (!best) throw NoActionError("no charging station is reachable");
  return static_cast<ActionId>(*best);
}

ActionId epsilon_greedy(std::span<const double> q, double xi, std::mt19937_64& rng) {
  EVD_REQUIRE(xi >= 0.0 && xi <= 1.0, "exploration probability must lie in [0, 1]");
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < xi) return random_action(static_cast<int>(q.size()), rng);
  return argmax(q);
}

ActionId RandomDispatcher::act(const Observation&) {
  if (!choice_) choice_ = random_action(m_, rng_);
  return *choice_;
}

}  // namespace evdispatch
