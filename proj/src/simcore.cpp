#include "evdispatch/simcore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "evdispatch/error.hpp"

namespace evdispatch {

const char* to_string(VehicleClass c) {
  switch (c) {
    case VehicleClass::conventional: return "conventional";
    case VehicleClass::background_ev: return "background_ev";
    case VehicleClass::target_ev: return "target_ev";
  }
  return "?";
}

const char* to_string(VehicleStatus s) {
  switch (s) {
    case VehicleStatus::driving: return "driving";
    case VehicleStatus::queued: return "queued";
    case VehicleStatus::charging: return "charging";
    case VehicleStatus::departed: return "departed";
  }
  return "?";
}

DemandProfile DemandProfile::double_peak() {
  DemandProfile p;
  for (int h = 0; h < 24; ++h) {
    const bool peak = (h >= 7 && h < 9) || (h >= 17 && h < 19);
    p.conventional[static_cast<std::size_t>(h)] = peak ? 4.0 : 1.0;
    p.background_ev[static_cast<std::size_t>(h)] = peak ? 4.0 : 1.0;
  }
  return p;
}

DemandProfile DemandProfile::flat() {
  DemandProfile p;
  p.conventional.fill(1.0);
  p.background_ev.fill(1.0);
  return p;
}

double bpr_speed(double free_flow_speed, int occupancy, int capacity, double alpha, double beta) {
  const double ratio = static_cast<double>(occupancy) / static_cast<double>(capacity);
  return free_flow_speed / (1.0 + alpha * std::pow(ratio, beta));
}

double charge_demand(const Vehicle& v) {
  EVD_REQUIRE(v.is_ev(), "charge_demand called on a conventional vehicle");
  return std::max(0.0, v.battery_capacity_kwh - v.battery_kwh);
}

namespace {

constexpr double kEnergyEps = 1e-9;

inline std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) {
    h ^= (x >> (8 * i)) & 0xffU;
    h *= 1099511628211ULL;
  }
  return h;
}

struct MoveResult {
  std::size_t edge_index = 0;
  double offset = 0.0;
  double moved = 0.0;
  double arrival_time = -1.0;  // >= 0 when the stop point was reached
  bool stranded = false;
};

}  // namespace

WorldState::WorldState(const RoadNetwork& net, SimParams params, std::vector<SpawnEvent> schedule)
    : net_(&net), params_(params), schedule_(std::move(schedule)) {
  if (!(params_.dt > 0.0)) throw ConfigError("dt must be positive");
  const double slots = params_.horizon / params_.dt;
  if (!(params_.horizon > 0.0) || std::abs(slots - std::round(slots)) > 1e-9)
    throw ConfigError("horizon must be a positive multiple of dt");
  clock_ = SimClock{0.0, params_.dt, params_.horizon};
  std::stable_sort(schedule_.begin(), schedule_.end(),
                   [](const SpawnEvent& a, const SpawnEvent& b) { return a.time < b.time; });
  for (const auto& s : net.stations())
    stations_.push_back(ChargingStation{s.id, s.anchor, s.plugs, s.power_kw, {}, {}});
  occupancy_.assign(net.edge_count(), 0);
  refresh_speeds();
}

StatusCounts WorldState::status_counts() const {
  StatusCounts c;
  for (const auto& v : vehicles_) {
    switch (v.status) {
      case VehicleStatus::driving: ++c.driving; break;
      case VehicleStatus::queued: ++c.queued; break;
      case VehicleStatus::charging: ++c.charging; break;
      case VehicleStatus::departed: ++c.departed; break;
    }
  }
  return c;
}

void WorldState::refresh_speeds() {
  const auto edges = net_->edges();
  speeds_.resize(edges.size());
  weights_.resize(edges.size());
#pragma omp parallel for schedule(static) if (edges.size() >= 4096)
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    speeds_[i] = bpr_speed(e.free_flow_speed, occupancy_[i], e.capacity, params_.bpr_alpha,
                           params_.bpr_beta);
    weights_[i] = e.length / speeds_[i];
  }
}

void WorldState::set_route(Vehicle& v, const PointRoute& r) {
  const EdgeId cur = v.current_edge();
  v.route.clear();
  v.route.push_back(cur);
  v.route.insert(v.route.end(), r.edges.begin(), r.edges.end());
  v.edge_index = 0;
  v.dest_offset = r.arrival_offset;
}

void WorldState::spawn(const SpawnEvent& ev) {
  Vehicle v;
  v.id = static_cast<VehicleId>(vehicles_.size());
  v.cls = ev.cls;
  v.route = {ev.origin};
  v.offset = 0.0;
  v.spawn_time = clock_.t;
  if (v.is_ev()) {
    v.battery_capacity_kwh = ev.capacity_kwh;
    v.battery_kwh = ev.capacity_kwh * ev.soc;
  }
  auto path = RouteTree(*net_, {ev.origin, 0.0}, weights_).route_to_point(
      {ev.destination, net_->edge(ev.destination).length});
  if (path) set_route(v, *path);
  else v.dest_offset = net_->edge(ev.origin).length;
  ++occupancy_[static_cast<std::size_t>(ev.origin)];
  driving_.push_back(v.id);
  vehicles_.push_back(std::move(v));
}

VehicleId WorldState::insert_vehicle(VehicleClass cls, EdgeId origin, EdgeId destination,
                                     double capacity_kwh, double battery_kwh) {
  EVD_REQUIRE(origin >= 0 && origin < static_cast<EdgeId>(net_->edge_count()), "unknown origin edge");
  EVD_REQUIRE(destination >= 0 && destination < static_cast<EdgeId>(net_->edge_count()),
              "unknown destination edge");
  SpawnEvent ev{clock_.t, cls, origin, destination, capacity_kwh,
                capacity_kwh > 0.0 ? battery_kwh / capacity_kwh : 0.0};
  spawn(ev);
  refresh_speeds();
  return vehicles_.back().id;
}

bool WorldState::route_to_station(VehicleId id, StationId station) {
  EVD_REQUIRE(id >= 0 && id < static_cast<VehicleId>(vehicles_.size()), "unknown vehicle");
  EVD_REQUIRE(station >= 0 && station < static_cast<StationId>(stations_.size()), "unknown station");
  Vehicle& v = vehicles_[static_cast<std::size_t>(id)];
  EVD_REQUIRE(v.status == VehicleStatus::driving, "only driving vehicles can be rerouted");
  if (v.stranded) return false;
  auto r = RouteTree(*net_, v.position(), weights_)
               .route_to_point(stations_[static_cast<std::size_t>(station)].anchor);
  if (!r) return false;
  if (v.station == station && v.dest_offset == r->arrival_offset &&
      v.route.size() - v.edge_index == r->edges.size() + 1 &&
      std::equal(r->edges.begin(), r->edges.end(), v.route.begin() + static_cast<std::ptrdiff_t>(v.edge_index) + 1))
    return false;
  v.station = station;
  set_route(v, *r);
  return true;
}

void WorldState::advance_vehicles(std::vector<std::pair<double, VehicleId>>& arrivals) {
  const double dt = params_.dt;
  const double t0 = clock_.t;
  const double kwh_per_m = params_.consumption_kwh_per_km / 1000.0;
  std::vector<MoveResult> moves(driving_.size());

  // Each vehicle only reads step-start speeds, so moves are independent.
#pragma omp parallel for schedule(static) if (driving_.size() >= 512)
  for (std::size_t i = 0; i < driving_.size(); ++i) {
    const Vehicle& v = vehicles_[static_cast<std::size_t>(driving_[i])];
    MoveResult m{v.edge_index, v.offset, 0.0, -1.0, false};
    if (v.stranded) {
      moves[i] = m;
      continue;
    }
    double budget_dist = v.is_ev() ? v.battery_kwh / kwh_per_m : std::numeric_limits<double>::infinity();
    double time_left = dt;
    const std::size_t last = v.route.size() - 1;
    while (true) {
      const EdgeId e = v.route[m.edge_index];
      const double len = net_->edge(e).length;
      const double end = m.edge_index == last ? v.dest_offset : len;
      const double to_end = std::max(0.0, end - m.offset);
      const double speed = speeds_[static_cast<std::size_t>(e)];
      const double reach = std::min(speed * time_left, budget_dist);
      if (reach < to_end) {
        m.offset += reach;
        m.moved += reach;
        budget_dist -= reach;
        if (budget_dist <= 0.0 && speed * time_left > reach) m.stranded = true;
        break;
      }
      m.offset = end;
      m.moved += to_end;
      budget_dist -= to_end;
      time_left -= to_end / speed;
      if (m.edge_index == last) {
        m.arrival_time = t0 + (dt - time_left);
        break;
      }
      ++m.edge_index;
      m.offset = 0.0;
      if (time_left <= 0.0) break;
      if (budget_dist <= 0.0) {
        m.stranded = true;
        break;
      }
    }
    moves[i] = m;
  }

  std::vector<VehicleId> still_driving;
  still_driving.reserve(driving_.size());
  for (std::size_t i = 0; i < driving_.size(); ++i) {
    Vehicle& v = vehicles_[static_cast<std::size_t>(driving_[i])];
    const MoveResult& m = moves[i];
    const EdgeId before = v.current_edge();
    v.edge_index = m.edge_index;
    v.offset = m.offset;
    if (v.is_ev()) v.battery_kwh = std::max(0.0, v.battery_kwh - m.moved * kwh_per_m);
    const EdgeId after = v.current_edge();
    if (before != after) {
      --occupancy_[static_cast<std::size_t>(before)];
      ++occupancy_[static_cast<std::size_t>(after)];
    }
    if (m.stranded && !v.stranded) {
      v.stranded = true;
      ++stranded_;
    }
    if (m.arrival_time >= 0.0) {
      --occupancy_[static_cast<std::size_t>(after)];
      if (v.station) {
        v.status = VehicleStatus::queued;
        v.queue_time = m.arrival_time;
        arrivals.emplace_back(m.arrival_time, v.id);
      } else {
        v.status = VehicleStatus::departed;
        v.departure_time = m.arrival_time;
      }
      continue;
    }
    still_driving.push_back(v.id);
  }
  driving_ = std::move(still_driving);
}

void WorldState::trigger_recharge() {
  for (VehicleId id : driving_) {
    Vehicle& v = vehicles_[static_cast<std::size_t>(id)];
    if (v.cls != VehicleClass::background_ev || v.station || v.stranded) continue;
    if (v.battery_kwh / v.battery_capacity_kwh >= params_.recharge_threshold) continue;
    RouteTree tree(*net_, v.position(), weights_);
    std::optional<PointRoute> best;
    StationId best_id = -1;
    for (const auto& s : stations_) {
      auto r = tree.route_to_point(s.anchor);
      if (r && (!best || r->travel_time < best->travel_time)) {
        best = std::move(r);
        best_id = s.id;
      }
    }
    if (best) {
      v.station = best_id;
      set_route(v, *best);
    }
  }
}

void WorldState::serve_stations(std::vector<std::pair<double, VehicleId>>& arrivals) {
  const double t1 = clock_.t + params_.dt;
  for (auto& st : stations_) {
    const double gain = st.power_kw * params_.dt / 3600.0;
    std::vector<ServiceSlot> keep;
    for (auto& slot : st.in_service) {
      Vehicle& v = vehicles_[static_cast<std::size_t>(slot.vehicle)];
      const double add = std::min(gain, slot.remaining_kwh);
      slot.remaining_kwh -= add;
      v.battery_kwh = std::min(v.battery_capacity_kwh, v.battery_kwh + add);
      if (slot.remaining_kwh <= kEnergyEps) {
        v.status = VehicleStatus::departed;
        v.departure_time = t1;
      } else {
        keep.push_back(slot);
      }
    }
    st.in_service = std::move(keep);
  }

  std::sort(arrivals.begin(), arrivals.end());
  for (const auto& [time, id] : arrivals) {
    const Vehicle& v = vehicles_[static_cast<std::size_t>(id)];
    stations_[static_cast<std::size_t>(*v.station)].queue.push_back(id);
  }

  for (auto& st : stations_) {
    while (!st.queue.empty() && static_cast<int>(st.in_service.size()) < st.plugs) {
      Vehicle& v = vehicles_[static_cast<std::size_t>(st.queue.front())];
      st.queue.pop_front();
      v.status = VehicleStatus::charging;
      v.charge_start = t1;
      const double demand = v.is_ev() ? charge_demand(v) : 0.0;
      if (demand <= kEnergyEps) {
        v.status = VehicleStatus::departed;
        v.departure_time = t1;
        continue;
      }
      st.in_service.push_back(ServiceSlot{v.id, demand});
    }
  }
}

void WorldState::mix_hash() {
  std::uint64_t h = fnv_mix(hash_, std::bit_cast<std::uint64_t>(clock_.t));
  for (const auto& v : vehicles_) {
    h = fnv_mix(h, static_cast<std::uint64_t>(v.id) << 8 | static_cast<std::uint64_t>(v.status));
    h = fnv_mix(h, static_cast<std::uint64_t>(v.current_edge()));
    h = fnv_mix(h, std::bit_cast<std::uint64_t>(v.offset));
    h = fnv_mix(h, std::bit_cast<std::uint64_t>(v.battery_kwh));
  }
  hash_ = h;
}

void WorldState::step() {
  EVD_REQUIRE(clock_.t < clock_.horizon, "step called at or past the horizon");
  const double t1 = clock_.t + params_.dt;
  while (next_spawn_ < schedule_.size() && schedule_[next_spawn_].time < t1)
    spawn(schedule_[next_spawn_++]);
  refresh_speeds();

  std::vector<std::pair<double, VehicleId>> arrivals;
  advance_vehicles(arrivals);
  trigger_recharge();
  serve_stations(arrivals);

  clock_.t = t1;
  refresh_speeds();
  mix_hash();
  if (trace_) *trace_ << trace_record() << '\n';
}

std::vector<int> WorldState::station_load() const {
  std::vector<int> z;
  z.reserve(stations_.size());
  for (const auto& s : stations_) z.push_back(s.load());
  return z;
}

std::vector<std::optional<int>> WorldState::enroute_counts(Position from,
                                                           std::optional<VehicleId> exclude) const {
  return enroute_counts(RouteTree(*net_, from, weights_), from, exclude);
}

std::vector<std::optional<int>> WorldState::enroute_counts(const RouteTree& tree, Position from,
                                                           std::optional<VehicleId> exclude) const {
  std::optional<EdgeId> excluded_edge;
  if (exclude) {
    const Vehicle& x = vehicle(*exclude);
    if (x.status == VehicleStatus::driving) excluded_edge = x.current_edge();
  }
  std::vector<std::optional<int>> out;
  out.reserve(stations_.size());
  std::vector<EdgeId> edges;
  for (const auto& s : stations_) {
    auto r = tree.route_to_point(s.anchor);
    if (!r) {
      out.emplace_back(std::nullopt);
      continue;
    }
    edges.assign(r->edges.begin(), r->edges.end());
    edges.push_back(from.edge);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    int n = 0;
    for (EdgeId e : edges) {
      n += occupancy_[static_cast<std::size_t>(e)];
      if (excluded_edge && *excluded_edge == e) --n;
    }
    out.emplace_back(n);
  }
  return out;
}

std::string WorldState::check_invariants() const {
  std::ostringstream err;
  const StatusCounts c = status_counts();
  if (c.total() != spawned()) {
    err << "conservation violated at t=" << clock_.t;
    return err.str();
  }
  std::vector<int> occ(net_->edge_count(), 0);
  std::int64_t driving_seen = 0;
  for (const auto& v : vehicles_) {
    if (v.status == VehicleStatus::driving) {
      ++occ[static_cast<std::size_t>(v.current_edge())];
      ++driving_seen;
      const double len = net_->edge(v.current_edge()).length;
      if (v.offset < 0.0 || v.offset > len + 1e-9) {
        err << "vehicle " << v.id << " offset " << v.offset << " outside edge";
        return err.str();
      }
    }
    if (v.is_ev() && (v.battery_kwh < 0.0 || v.battery_kwh > v.battery_capacity_kwh + 1e-9)) {
      err << "vehicle " << v.id << " battery out of range";
      return err.str();
    }
  }
  if (driving_seen != static_cast<std::int64_t>(driving_.size())) return "driving list out of sync";
  if (occ != occupancy_) return "edge occupancy differs from recount";
  std::vector<int> z(stations_.size(), 0);
  for (const auto& v : vehicles_)
    if ((v.status == VehicleStatus::queued || v.status == VehicleStatus::charging) && v.station)
      ++z[static_cast<std::size_t>(*v.station)];
  for (const auto& s : stations_) {
    if (static_cast<int>(s.in_service.size()) > s.plugs) {
      err << "station " << s.id << " serves more vehicles than plugs";
      return err.str();
    }
    for (VehicleId q : s.queue)
      for (const auto& slot : s.in_service)
        if (slot.vehicle == q) return "queue and in-service overlap";
    if (z[static_cast<std::size_t>(s.id)] != s.load()) {
      err << "station " << s.id << " load differs from vehicle recount";
      return err.str();
    }
  }
  return {};
}

std::string WorldState::trace_record() const {
  const StatusCounts c = status_counts();
  std::ostringstream out;
  out << "{\"t\":" << clock_.t << ",\"driving\":" << c.driving << ",\"queued\":" << c.queued
      << ",\"charging\":" << c.charging << ",\"departed\":" << c.departed << ",\"z\":[";
  for (std::size_t i = 0; i < stations_.size(); ++i) out << (i ? "," : "") << stations_[i].load();
  out << "],\"occupancy\":[";
  for (std::size_t i = 0; i < occupancy_.size(); ++i) out << (i ? "," : "") << occupancy_[i];
  out << "]}";
  return out.str();
}

WorldState world_init(const RoadNetwork& net, const DemandProfile& profile, int n_background_ev,
                      int n_conventional, std::uint64_t seed, SimParams params) {
  if (n_background_ev < 0 || n_conventional < 0) throw ConfigError("vehicle counts must be >= 0");
  if (net.edge_count() < 2) throw ConfigError("network needs at least two edges for OD pairs");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<EdgeId> pick_edge(0, static_cast<EdgeId>(net.edge_count()) - 1);
  std::uniform_real_distribution<double> within_hour(0.0, 3600.0);
  std::uniform_real_distribution<double> cap(params.capacity_min_kwh, params.capacity_max_kwh);
  std::uniform_real_distribution<double> soc(params.soc_min, params.soc_max);
  const double hours = params.horizon / 3600.0;

  std::vector<SpawnEvent> schedule;
  auto draw = [&](VehicleClass cls, const std::array<double, 24>& rates, int n) {
    if (n == 0) return;
    for (double r : rates)
      if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("hourly rates must be finite and >= 0");
    std::array<double, 24> w = rates;
    for (std::size_t h = 0; h < 24; ++h)
      if (static_cast<double>(h) >= hours) w[h] = 0.0;
    if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0)
      throw ConfigError(std::string("demand profile has no positive rate for ") + to_string(cls));
    std::discrete_distribution<int> hour(w.begin(), w.end());
    for (int i = 0; i < n; ++i) {
      SpawnEvent ev;
      ev.cls = cls;
      ev.time = std::min(hour(rng) * 3600.0 + within_hour(rng), params.horizon - params.dt);
      ev.origin = pick_edge(rng);
      do {
        ev.destination = pick_edge(rng);
      } while (ev.destination == ev.origin);
      if (cls != VehicleClass::conventional) {
        ev.capacity_kwh = cap(rng);
        ev.soc = soc(rng);
      }
      schedule.push_back(ev);
    }
  };
  draw(VehicleClass::conventional, profile.conventional, n_conventional);
  draw(VehicleClass::background_ev, profile.background_ev, n_background_ev);
  return WorldState(net, params, std::move(schedule));
}

}  // namespace evdispatch
