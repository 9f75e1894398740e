#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "evdispatch/netgraph.hpp"
#include "evdispatch/simcore.hpp"

namespace evdispatch {

using ActionId = int;

/// Per-channel squashing scales: encoded = x / (x + scale).
struct NormalizationScales {
  double distance_m = 2000.0;
  double enroute = 50.0;
  double load = 10.0;
};

/// Flat state vector [d_0..d_m-1, n_0..n_m-1, z_0..z_m-1] plus the raw values behind it.
struct Observation {
  std::vector<double> features;
  std::vector<std::optional<double>> raw_distance;  // nullopt = unreachable
  std::vector<std::optional<int>> raw_enroute;
  std::vector<int> raw_load;

  std::size_t stations() const { return raw_load.size(); }
  std::span<const double> d() const { return std::span<const double>(features).subspan(0, stations()); }
  std::span<const double> n() const {
    return std::span<const double>(features).subspan(stations(), stations());
  }
  std::span<const double> z() const {
    return std::span<const double>(features).subspan(2 * stations(), stations());
  }
  bool reachable(std::size_t j) const { return raw_distance[j].has_value(); }
};

double normalize(double x, double scale);

Observation encode_observation(std::span<const std::optional<double>> distance,
                               std::span<const std::optional<int>> enroute,
                               std::span<const int> load, const NormalizationScales& scales);

struct EpisodeConfig {
  int n_background_ev = 200;
  int n_conventional = 400;
  double depart_earliest = 7.0 * 3600.0;
  double depart_latest = 19.0 * 3600.0;
  double decision_interval = 60.0;  // multiple of dt
  std::uint64_t seed = 0;
};

struct StepInfo {
  double t = 0.0;
  Position target_position;
  ActionId station = -1;
  bool horizon_expired = false;
  double t_travel = 0.0;  // set when done
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// 7200 / T_travel. Throws ContractError for non-positive travel time.
double episode_reward(double t_travel, double constant = 7200.0);

/// Gym-style episode contract used by the learners; lets tests plug in toy MDPs.
class DispatchEnv {
 public:
  virtual ~DispatchEnv() = default;
  virtual Observation reset(const EpisodeConfig& cfg) = 0;
  virtual StepResult act_and_step(ActionId a) = 0;
  virtual int num_actions() const = 0;
  std::size_t observation_size() const { return 3 * static_cast<std::size_t>(num_actions()); }
};

struct EnvOptions {
  SimParams sim;
  DemandProfile profile = DemandProfile::double_peak();
  NormalizationScales scales;
  double reward_constant = 7200.0;
  double target_soc_min = 0.15;
  double target_soc_max = 0.30;
};

/// Single-target dispatch episode over the mesoscopic simulator.
///
/// reset() runs background traffic from 00:00 until the target's seeded departure,
/// then inserts the target with a random OD pair. Each act_and_step() points the
/// target at a station and advances one decision interval, returning early when the
/// target reaches a station. Once queued the target is committed to that station.
/// The episode ends when charging starts (reward 7200 / T_travel) or at the horizon.
class Environment final : public DispatchEnv {
 public:
  explicit Environment(const RoadNetwork& net, EnvOptions opts = {});

  Observation reset(const EpisodeConfig& cfg) override;
  StepResult act_and_step(ActionId a) override;
  int num_actions() const override { return static_cast<int>(net_->station_count()); }

  bool active() const { return active_; }
  const WorldState& world() const { return *world_; }
  const RoadNetwork& network() const { return *net_; }
  VehicleId target() const { return target_; }
  double depart_time() const { return depart_time_; }
  const EnvOptions& options() const { return opts_; }

  /// Line-delimited JSON episode log (t, observation raw/normalized, action, reward, done).
  void set_log(std::ostream* out) { log_ = out; }

 private:
  Observation observe() const;
  void log_record(const Observation& obs, ActionId a, double reward, bool done) const;

  const RoadNetwork* net_;
  EnvOptions opts_;
  EpisodeConfig cfg_;
  std::unique_ptr<WorldState> world_;
  VehicleId target_ = -1;
  double depart_time_ = 0.0;
  bool active_ = false;
  std::ostream* log_ = nullptr;
};

}  // namespace evdispatch
