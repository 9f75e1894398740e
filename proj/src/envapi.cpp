#include "evdispatch/envapi.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "evdispatch/error.hpp"
#include "evdispatch/seeding.hpp"

namespace evdispatch {

double normalize(double x, double scale) { return x / (x + scale); }

Observation encode_observation(std::span<const std::optional<double>> distance,
                               std::span<const std::optional<int>> enroute,
                               std::span<const int> load, const NormalizationScales& scales) {
  const std::size_t m = load.size();
  EVD_REQUIRE(distance.size() == m && enroute.size() == m, "observation channels differ in length");
  Observation obs;
  obs.raw_distance.assign(distance.begin(), distance.end());
  obs.raw_enroute.assign(enroute.begin(), enroute.end());
  obs.raw_load.assign(load.begin(), load.end());
  obs.features.resize(3 * m);
  for (std::size_t j = 0; j < m; ++j) {
    // Unreachable stations sit at the supremum of the encoding.
    obs.features[j] = distance[j] ? normalize(*distance[j], scales.distance_m) : 1.0;
    obs.features[m + j] = enroute[j] ? normalize(*enroute[j], scales.enroute) : 1.0;
    obs.features[2 * m + j] = normalize(load[j], scales.load);
  }
  return obs;
}

double episode_reward(double t_travel, double constant) {
  EVD_REQUIRE(t_travel > 0.0, "travel time must be positive");
  return constant / t_travel;
}

Environment::Environment(const RoadNetwork& net, EnvOptions opts) : net_(&net), opts_(std::move(opts)) {
  if (net.station_count() == 0) throw ConfigError("network has no charging stations");
}

Observation Environment::reset(const EpisodeConfig& cfg) {
  if (!(cfg.decision_interval >= opts_.sim.dt))
    throw ConfigError("decision interval must be at least one simulation step");
  const double ratio = cfg.decision_interval / opts_.sim.dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    throw ConfigError("decision interval must be a multiple of dt");
  if (!(cfg.depart_earliest >= 0.0) || cfg.depart_latest < cfg.depart_earliest ||
      cfg.depart_latest >= opts_.sim.horizon)
    throw ConfigError("departure window must lie inside the simulated day");

  cfg_ = cfg;
  world_ = std::make_unique<WorldState>(world_init(*net_, opts_.profile, cfg.n_background_ev,
                                                   cfg.n_conventional,
                                                   derive_seed({cfg.seed, 0x776f726cULL}), opts_.sim));

  std::mt19937_64 rng(derive_seed({cfg.seed, 0x74617267ULL}));
  std::uniform_real_distribution<double> when(cfg.depart_earliest, cfg.depart_latest);
  depart_time_ = std::floor(when(rng) / opts_.sim.dt) * opts_.sim.dt;
  std::uniform_int_distribution<EdgeId> pick(0, static_cast<EdgeId>(net_->edge_count()) - 1);
  const EdgeId origin = pick(rng);
  EdgeId dest = origin;
  while (dest == origin) dest = pick(rng);
  std::uniform_real_distribution<double> cap(opts_.sim.capacity_min_kwh, opts_.sim.capacity_max_kwh);
  std::uniform_real_distribution<double> soc(opts_.target_soc_min, opts_.target_soc_max);
  const double capacity = cap(rng);
  const double battery = capacity * soc(rng);

  while (world_->clock().t < depart_time_) world_->step();
  target_ = world_->insert_vehicle(VehicleClass::target_ev, origin, dest, capacity, battery);
  active_ = true;
  Observation obs = observe();
  log_record(obs, -1, 0.0, false);
  return obs;
}

Observation Environment::observe() const {
  const Vehicle& tv = world_->vehicle(target_);
  const Position pos = tv.position();
  RouteTree tree(*net_, pos, world_->edge_weights());
  std::vector<std::optional<double>> d;
  d.reserve(net_->station_count());
  for (const auto& s : net_->stations()) {
    auto r = tree.route_to_point(s.anchor);
    d.push_back(r ? std::optional<double>(r->length) : std::nullopt);
  }
  auto n = world_->enroute_counts(tree, pos, target_);
  auto z = world_->station_load();
  return encode_observation(d, n, z, opts_.scales);
}

StepResult Environment::act_and_step(ActionId a) {
  EVD_REQUIRE(active_, "act_and_step called without an active episode");
  EVD_REQUIRE(a >= 0 && a < num_actions(), "action out of range: " + std::to_string(a));

  if (world_->vehicle(target_).status == VehicleStatus::driving)
    world_->route_to_station(target_, a);

  const auto slots = static_cast<int>(std::lround(cfg_.decision_interval / opts_.sim.dt));
  const VehicleStatus before = world_->vehicle(target_).status;
  for (int k = 0; k < slots && !world_->clock().finished(); ++k) {
    world_->step();
    const VehicleStatus now = world_->vehicle(target_).status;
    if (now != before) break;
  }

  StepResult res;
  const Vehicle& tv = world_->vehicle(target_);
  res.info.t = world_->clock().t;
  res.info.target_position = tv.position();
  res.info.station = tv.station.value_or(a);
  if (tv.charge_start >= 0.0) {
    res.done = true;
    res.info.t_travel = tv.charge_start - depart_time_;
    res.reward = episode_reward(res.info.t_travel, opts_.reward_constant);
  } else if (world_->clock().finished()) {
    res.done = true;
    res.info.horizon_expired = true;
    res.info.t_travel = opts_.sim.horizon - depart_time_;
    res.reward = episode_reward(res.info.t_travel, opts_.reward_constant);
  }
  res.obs = observe();
  active_ = !res.done;
  log_record(res.obs, a, res.reward, res.done);
  return res;
}

void Environment::log_record(const Observation& obs, ActionId a, double reward, bool done) const {
  if (!log_) return;
  std::ostringstream out;
  out.precision(17);
  out << "{\"t\":" << world_->clock().t << ",\"action\":" << a << ",\"reward\":" << reward
      << ",\"done\":" << (done ? "true" : "false") << ",\"d_raw\":[";
  for (std::size_t j = 0; j < obs.stations(); ++j) {
    out << (j ? "," : "");
    if (obs.raw_distance[j]) out << *obs.raw_distance[j];
    else out << "null";
  }
  out << "],\"n_raw\":[";
  for (std::size_t j = 0; j < obs.stations(); ++j) {
    out << (j ? "," : "");
    if (obs.raw_enroute[j]) out << *obs.raw_enroute[j];
    else out << "null";
  }
  out << "],\"z_raw\":[";
  for (std::size_t j = 0; j < obs.stations(); ++j) out << (j ? "," : "") << obs.raw_load[j];
  out << "],\"features\":[";
  for (std::size_t j = 0; j < obs.features.size(); ++j) out << (j ? "," : "") << obs.features[j];
  out << "]}";
  *log_ << out.str() << '\n';
}

}  // namespace evdispatch
