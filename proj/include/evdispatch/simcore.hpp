#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "evdispatch/netgraph.hpp"

namespace evdispatch {

using VehicleId = std::int32_t;

enum class VehicleClass { conventional, background_ev, target_ev };
enum class VehicleStatus { driving, queued, charging, departed };

const char* to_string(VehicleClass c);
const char* to_string(VehicleStatus s);

struct SimClock {
  double t = 0.0;           // seconds since 00:00
  double dt = 30.0;         // slot size
  double horizon = 86400.0;

  bool finished() const { return t >= horizon; }
};

struct Vehicle {
  VehicleId id = 0;
  VehicleClass cls = VehicleClass::conventional;
  std::vector<EdgeId> route;    // current edge first
  std::size_t edge_index = 0;   // position in route
  double offset = 0.0;          // meters on current edge
  double dest_offset = 0.0;     // stop point on the last route edge
  std::optional<StationId> station;  // set once the vehicle is bound to a charger
  double battery_kwh = 0.0;
  double battery_capacity_kwh = 0.0;
  VehicleStatus status = VehicleStatus::driving;
  bool stranded = false;

  double spawn_time = 0.0;
  double queue_time = -1.0;     // exact arrival instant at the station
  double charge_start = -1.0;
  double departure_time = -1.0;

  bool is_ev() const { return cls != VehicleClass::conventional; }
  EdgeId current_edge() const { return route[edge_index]; }
  Position position() const { return {current_edge(), offset}; }
};

struct ServiceSlot {
  VehicleId vehicle = 0;
  double remaining_kwh = 0.0;
};

struct ChargingStation {
  StationId id = 0;
  Position anchor;
  int plugs = 1;
  double power_kw = 100.0;
  std::deque<VehicleId> queue;
  std::vector<ServiceSlot> in_service;

  int load() const { return static_cast<int>(queue.size() + in_service.size()); }
};

/// Hourly spawn intensities per class (relative weights; totals are set by the scenario).
struct DemandProfile {
  std::array<double, 24> conventional{};
  std::array<double, 24> background_ev{};

  /// Morning (07-09) and evening (17-19) peaks at 4x the off-peak rate.
  static DemandProfile double_peak();
  static DemandProfile flat();
};

struct SimParams {
  double dt = 30.0;
  double horizon = 86400.0;
  double bpr_alpha = 0.15;
  double bpr_beta = 4.0;
  double consumption_kwh_per_km = 0.2;
  double capacity_min_kwh = 40.0;
  double capacity_max_kwh = 60.0;
  double soc_min = 0.2;
  double soc_max = 0.8;
  double recharge_threshold = 0.3;
};

struct SpawnEvent {
  double time = 0.0;
  VehicleClass cls = VehicleClass::conventional;
  EdgeId origin = 0;
  EdgeId destination = 0;
  double capacity_kwh = 0.0;
  double soc = 0.0;
};

struct StatusCounts {
  std::int64_t driving = 0;
  std::int64_t queued = 0;
  std::int64_t charging = 0;
  std::int64_t departed = 0;

  std::int64_t total() const { return driving + queued + charging + departed; }
};

/// BPR-form link speed: free flow divided by 1 + alpha * (n / capacity)^beta.
double bpr_speed(double free_flow_speed, int occupancy, int capacity, double alpha, double beta);

/// Energy still needed to charge an EV to full. Throws ContractError for conventional vehicles.
double charge_demand(const Vehicle& v);

/// Discrete-time mesoscopic simulation of traffic, batteries and charger queues.
///
/// Single writer: step() mutates; const queries are safe between steps.
class WorldState {
 public:
  WorldState(const RoadNetwork& net, SimParams params, std::vector<SpawnEvent> schedule);

  const RoadNetwork& network() const { return *net_; }
  const SimParams& params() const { return params_; }
  const SimClock& clock() const { return clock_; }
  std::span<const Vehicle> vehicles() const { return vehicles_; }
  const Vehicle& vehicle(VehicleId id) const { return vehicles_[static_cast<std::size_t>(id)]; }
  std::span<const ChargingStation> stations() const { return stations_; }
  std::span<const SpawnEvent> schedule() const { return schedule_; }
  std::span<const int> edge_occupancy() const { return occupancy_; }
  /// Current per-edge travel times (seconds) from the congestion model.
  std::span<const double> edge_weights() const { return weights_; }
  std::span<const double> edge_speeds() const { return speeds_; }

  std::int64_t spawned() const { return static_cast<std::int64_t>(vehicles_.size()); }
  std::int64_t stranded_count() const { return stranded_; }
  StatusCounts status_counts() const;
  std::uint64_t trajectory_hash() const { return hash_; }

  /// Advances one slot. Throws ContractError at or past the horizon.
  void step();

  /// Z: queued plus in-service vehicles per station.
  std::vector<int> station_load() const;

  /// N: driving vehicles on the shortest-time route from `from` to each station,
  /// excluding `exclude`; nullopt marks an unreachable station.
  std::vector<std::optional<int>> enroute_counts(Position from,
                                                 std::optional<VehicleId> exclude = {}) const;
  std::vector<std::optional<int>> enroute_counts(const RouteTree& tree, Position from,
                                                 std::optional<VehicleId> exclude = {}) const;

  /// Adds a vehicle outside the spawn schedule (the dispatched target EV).
  VehicleId insert_vehicle(VehicleClass cls, EdgeId origin, EdgeId destination, double capacity_kwh,
                           double battery_kwh);

  /// Points a driving vehicle at a station along the current shortest-time route.
  /// Returns false when the route is unchanged or the station is unreachable.
  bool route_to_station(VehicleId id, StationId station);

  /// Recounts everything that step() maintains incrementally. Returns an empty string
  /// when consistent, otherwise a description of the first violation.
  std::string check_invariants() const;

  /// One line-delimited JSON record: time, status counts, Z and per-edge occupancy.
  std::string trace_record() const;
  void set_trace(std::ostream* out) { trace_ = out; }

 private:
  void spawn(const SpawnEvent& ev);
  void refresh_speeds();
  void advance_vehicles(std::vector<std::pair<double, VehicleId>>& arrivals);
  void trigger_recharge();
  void serve_stations(std::vector<std::pair<double, VehicleId>>& arrivals);
  void mix_hash();
  void set_route(Vehicle& v, const PointRoute& r);

  const RoadNetwork* net_;
  SimParams params_;
  SimClock clock_;
  std::vector<SpawnEvent> schedule_;
  std::size_t next_spawn_ = 0;
  std::vector<Vehicle> vehicles_;
  std::vector<VehicleId> driving_;
  std::vector<ChargingStation> stations_;
  std::vector<int> occupancy_;
  std::vector<double> speeds_;
  std::vector<double> weights_;
  std::int64_t stranded_ = 0;
  std::uint64_t hash_ = 1469598103934665603ULL;
  std::ostream* trace_ = nullptr;
};

/// Empty world at 00:00 with a pre-drawn spawn schedule containing exactly the
/// requested number of vehicles per class, timed by the hourly profile.
WorldState world_init(const RoadNetwork& net, const DemandProfile& profile, int n_background_ev,
                      int n_conventional, std::uint64_t seed, SimParams params = {});

}  // namespace evdispatch
