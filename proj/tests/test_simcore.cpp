#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

#include "evdispatch/error.hpp"
#include "evdispatch/simcore.hpp"
#include "oracles.hpp"

using namespace evdispatch;

namespace {

// Two long opposite edges; one station near the end of edge 0.
RoadNetwork corridor(int plugs, int capacity = 100) {
  std::vector<Node> nodes{{0, 0, 0}, {1, 2000, 0}};
  std::vector<Edge> edges{{0, 0, 1, 2000.0, 10.0, capacity}, {1, 1, 0, 2000.0, 10.0, capacity}};
  std::vector<StationSite> st{{0, {0, 1500.0}, plugs, 100.0}};
  return RoadNetwork(nodes, edges, st);
}

WorldState empty_world(const RoadNetwork& net) { return WorldState(net, SimParams{}, {}); }

}  // namespace

TEST_CASE("BPR slowdown") {
  CHECK(bpr_speed(10.0, 0, 3, 0.15, 4.0) == 10.0);
  CHECK(bpr_speed(10.0, 3, 3, 0.15, 4.0) == doctest::Approx(10.0 / 1.15));
  CHECK(bpr_speed(10.0, 6, 3, 0.15, 4.0) == doctest::Approx(10.0 / (1.0 + 0.15 * 16.0)));
}

TEST_CASE("charge demand") {
  Vehicle v;
  v.cls = VehicleClass::background_ev;
  v.battery_capacity_kwh = 50.0;
  v.battery_kwh = 10.0;
  CHECK(charge_demand(v) == 40.0);
  CHECK(charge_demand(v) / 100.0 * 3600.0 == doctest::Approx(1440.0));
  v.battery_kwh = 50.0;
  CHECK(charge_demand(v) == 0.0);
  v.cls = VehicleClass::conventional;
  CHECK_THROWS_AS(charge_demand(v), ContractError);
}

TEST_CASE("empty scenario runs a quiet day") {
  RoadNetwork net = gen_grid({});
  WorldState w = world_init(net, DemandProfile::double_peak(), 0, 0, 1);
  CHECK(w.station_load() == std::vector<int>(5, 0));
  int steps = 0;
  while (!w.clock().finished()) {
    w.step();
    ++steps;
    CHECK(w.status_counts().total() == 0);
  }
  CHECK(steps == 2880);
  CHECK_THROWS_AS(w.step(), ContractError);
}

TEST_CASE("spawn schedule totals are exact and seeded") {
  RoadNetwork net = gen_grid({});
  WorldState a = world_init(net, DemandProfile::double_peak(), 200, 400, 11);
  WorldState b = world_init(net, DemandProfile::double_peak(), 200, 400, 11);
  WorldState c = world_init(net, DemandProfile::double_peak(), 200, 400, 12);
  auto count = [](const WorldState& w, VehicleClass cls) {
    return std::count_if(w.schedule().begin(), w.schedule().end(),
                         [&](const SpawnEvent& e) { return e.cls == cls; });
  };
  CHECK(count(a, VehicleClass::background_ev) == 200);
  CHECK(count(a, VehicleClass::conventional) == 400);
  REQUIRE(a.schedule().size() == b.schedule().size());
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.schedule().size(); ++i) {
    const auto& x = a.schedule()[i];
    const auto& y = b.schedule()[i];
    same = same && x.time == y.time && x.origin == y.origin && x.destination == y.destination &&
           x.cls == y.cls && x.soc == y.soc && x.capacity_kwh == y.capacity_kwh;
    differs = differs || x.time != c.schedule()[i].time;
  }
  CHECK(same);
  CHECK(differs);
  for (const auto& e : a.schedule()) {
    CHECK(e.time >= 0.0);
    CHECK(e.time < 86400.0);
    if (e.cls == VehicleClass::background_ev) {
      CHECK(e.capacity_kwh >= 40.0);
      CHECK(e.capacity_kwh <= 60.0);
      CHECK(e.soc >= 0.2);
      CHECK(e.soc <= 0.8);
    }
  }
}

TEST_CASE("peak hours receive four times the off-peak spawns on average") {
  RoadNetwork net = gen_grid({});
  WorldState w = world_init(net, DemandProfile::double_peak(), 0, 20000, 3);
  std::array<int, 24> hours{};
  for (const auto& e : w.schedule()) ++hours[static_cast<std::size_t>(e.time / 3600.0)];
  // 4 peak hours at weight 4, 20 off-peak at weight 1: total weight 36.
  const double peak = (hours[7] + hours[8] + hours[17] + hours[18]) / 4.0;
  double off = 0.0;
  for (int h = 0; h < 24; ++h)
    if (!((h >= 7 && h < 9) || (h >= 17 && h < 19))) off += hours[static_cast<std::size_t>(h)];
  off /= 20.0;
  CHECK(peak / off == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("a zero-rate profile with vehicles requested is a configuration error") {
  RoadNetwork net = gen_grid({});
  CHECK_THROWS_AS(world_init(net, DemandProfile{}, 10, 0, 1), ConfigError);
  CHECK_NOTHROW(world_init(net, DemandProfile{}, 0, 0, 1));
}

TEST_CASE("a lone vehicle advances speed times dt") {
  RoadNetwork net = corridor(1);
  WorldState w = empty_world(net);
  const VehicleId id = w.insert_vehicle(VehicleClass::conventional, 0, 1, 0.0, 0.0);
  w.step();
  // The vehicle itself occupies the edge: 1 of 100 is a 1.5e-9 relative slowdown.
  CHECK(w.vehicle(id).offset == doctest::Approx(300.0).epsilon(1e-6));
  w.step();
  CHECK(w.vehicle(id).offset == doctest::Approx(600.0).epsilon(1e-6));
}

TEST_CASE("residual distance carries onto the next edge") {
  RoadNetwork net = corridor(1);
  WorldState w = empty_world(net);
  const VehicleId id = w.insert_vehicle(VehicleClass::conventional, 0, 1, 0.0, 0.0);
  for (int k = 0; k < 7; ++k) w.step();  // 2100 m
  CHECK(w.vehicle(id).current_edge() == 1);
  CHECK(w.vehicle(id).offset == doctest::Approx(100.0).epsilon(1e-6));
}

TEST_CASE("driving EVs consume energy by distance") {
  RoadNetwork net = corridor(1);
  WorldState w = empty_world(net);
  const VehicleId id = w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, 40.0);
  w.step();
  CHECK(w.vehicle(id).battery_kwh == doctest::Approx(40.0 - 0.3 * 0.2).epsilon(1e-6));
}

TEST_CASE("an EV that runs dry halts and is counted as stranded") {
  RoadNetwork net = corridor(1);
  WorldState w = empty_world(net);
  const VehicleId id = w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, 0.1);  // 500 m of range
  for (int k = 0; k < 5; ++k) w.step();
  const Vehicle& v = w.vehicle(id);
  CHECK(v.stranded);
  CHECK(v.battery_kwh == 0.0);
  CHECK(v.offset == doctest::Approx(500.0).epsilon(1e-6));
  CHECK(w.stranded_count() == 1);
  CHECK(v.status == VehicleStatus::driving);
  CHECK(w.check_invariants().empty());
}

TEST_CASE("two plugs and three simultaneous arrivals follow the FIFO oracle") {
  // Huge capacity keeps the congestion slowdown below rounding so arrivals stay slot-aligned.
  RoadNetwork net = corridor(2, 100000);
  WorldState w = empty_world(net);
  std::map<VehicleId, double> initial;
  for (double battery : {10.0, 30.0, 45.0}) {
    const VehicleId id = w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, battery);
    initial[id] = battery;
    REQUIRE(w.route_to_station(id, 0));
  }
  // 1500 m at 10 m/s: all three reach the anchor at the end of the fifth slot.
  for (int k = 0; k < 5; ++k) w.step();
  const ChargingStation& st = w.stations()[0];
  CHECK(st.in_service.size() == 2);
  CHECK(st.queue.size() == 1);
  CHECK(w.station_load()[0] == 3);

  // Later arrivals join behind.
  for (double battery : {20.0, 49.5}) {
    const VehicleId id = w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, battery);
    initial[id] = battery;
    REQUIRE(w.route_to_station(id, 0));
  }
  auto all_departed = [&] {
    for (const auto& [id, b] : initial)
      if (w.vehicle(id).status != VehicleStatus::departed) return false;
    return true;
  };
  while (!w.clock().finished() && !all_departed()) {
    w.step();
    REQUIRE(w.check_invariants().empty());
  }
  REQUIRE(all_departed());

  std::vector<VehicleId> order;
  for (const auto& [id, b] : initial) order.push_back(id);
  std::sort(order.begin(), order.end(), [&](VehicleId a, VehicleId b) {
    return std::pair(w.vehicle(a).queue_time, a) < std::pair(w.vehicle(b).queue_time, b);
  });
  const double dt = 30.0;
  std::vector<oracle::QueueJob> jobs;
  for (VehicleId id : order) {
    const Vehicle& v = w.vehicle(id);
    // A vehicle joins the queue at the end of the slot it arrived in.
    const double ready = std::max(dt, std::ceil(v.queue_time / dt - 1e-9) * dt);
    jobs.push_back({ready, 50.0 - (initial[id] - 1500.0 * 0.2 / 1000.0)});
  }
  const auto want = oracle::fifo_start_times(jobs, 2, 100.0 * dt / 3600.0, dt);
  for (std::size_t i = 0; i < order.size(); ++i) {
    CAPTURE(i);
    CHECK(w.vehicle(order[i]).charge_start == doctest::Approx(want[i]));
    CHECK(w.vehicle(order[i]).battery_kwh == doctest::Approx(50.0));
  }
}

TEST_CASE("station load counts charging and queued vehicles") {
  RoadNetwork net = corridor(2, 100000);
  WorldState w = empty_world(net);
  CHECK(w.station_load() == std::vector<int>{0});
  for (int k = 0; k < 5; ++k) REQUIRE(w.route_to_station(w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, 10.0), 0));
  for (int k = 0; k < 5; ++k) w.step();
  const auto c = w.status_counts();
  CHECK(c.charging == 2);
  CHECK(c.queued == 3);
  CHECK(w.station_load()[0] == 5);
}

TEST_CASE("a full battery departs on promotion") {
  RoadNetwork net = corridor(1, 100000);
  SimParams params;
  params.consumption_kwh_per_km = 0.0;
  WorldState w(net, params, {});
  const VehicleId id = w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, 50.0);
  REQUIRE(w.route_to_station(id, 0));
  for (int k = 0; k < 5; ++k) w.step();
  const Vehicle& v = w.vehicle(id);
  CHECK(v.status == VehicleStatus::departed);
  CHECK(v.charge_start == 150.0);
  CHECK(v.departure_time == 150.0);
  CHECK(w.station_load()[0] == 0);
}

TEST_CASE("charging demand decreases every step until departure") {
  RoadNetwork net = corridor(1, 100000);
  WorldState w = empty_world(net);
  const VehicleId id = w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, 10.0);
  REQUIRE(w.route_to_station(id, 0));
  double last = 1e9;
  int charging_steps = 0;
  while (w.vehicle(id).status != VehicleStatus::departed) {
    w.step();
    if (w.vehicle(id).status == VehicleStatus::charging) {
      REQUIRE(w.stations()[0].in_service.size() == 1);
      const double rem = w.stations()[0].in_service[0].remaining_kwh;
      CHECK(rem < last);
      last = rem;
      ++charging_steps;
    }
  }
  const Vehicle& v = w.vehicle(id);
  const double demand = 50.0 - (10.0 - 0.3);
  const double slots = std::ceil(demand / (100.0 * 30.0 / 3600.0));
  CHECK(v.battery_kwh == doctest::Approx(50.0));
  CHECK(v.departure_time - v.charge_start == doctest::Approx(30.0 * slots));
  CHECK(charging_steps == static_cast<int>(slots));
}

TEST_CASE("en-route counts on a single-edge path") {
  RoadNetwork net = corridor(1);
  WorldState w = empty_world(net);
  CHECK(w.enroute_counts({0, 0.0}) == std::vector<std::optional<int>>{0});
  for (int k = 0; k < 5; ++k) w.insert_vehicle(VehicleClass::conventional, 0, 1, 0.0, 0.0);
  const VehicleId self = w.insert_vehicle(VehicleClass::target_ev, 0, 1, 50.0, 40.0);
  auto n = w.enroute_counts({0, 0.0}, self);
  REQUIRE(n[0]);
  CHECK(*n[0] == 5);
}

TEST_CASE("re-issuing the same station does not reroute") {
  RoadNetwork net = gen_grid({});
  WorldState w = empty_world(net);
  const VehicleId id = w.insert_vehicle(VehicleClass::target_ev, 3, 90, 50.0, 20.0);
  CHECK(w.route_to_station(id, 2));
  CHECK_FALSE(w.route_to_station(id, 2));
  CHECK(w.route_to_station(id, 3));
}

TEST_CASE("full-day properties with 400 EVs") {
  RoadNetwork net = gen_grid({});
  WorldState w = world_init(net, DemandProfile::double_peak(), 400, 400, 42);
  double max_ff = 0.0;
  for (const auto& e : net.edges()) max_ff = std::max(max_ff, e.free_flow_speed);
  struct Prev {
    EdgeId edge;
    double offset;
  };
  std::map<VehicleId, Prev> prev;
  int violations = 0;
  while (!w.clock().finished()) {
    for (const auto& v : w.vehicles())
      if (v.status == VehicleStatus::driving) prev[v.id] = {v.current_edge(), v.offset};
    w.step();
    if (!w.check_invariants().empty()) ++violations;
    const auto c = w.status_counts();
    if (c.total() != w.spawned()) ++violations;
    for (double s : w.edge_speeds()) CHECK((s > 0.0 && s <= max_ff));
    if (static_cast<int>(w.clock().t) % 3600 == 0) {
      for (int k = 0; k < 4; ++k) {
        const Position from{static_cast<EdgeId>((k * 37 + static_cast<int>(w.clock().t)) % net.edge_count()), 0.0};
        for (const auto& n : w.enroute_counts(from)) {
          REQUIRE(n.has_value());
          CHECK(*n <= c.driving);
        }
      }
    }
    for (const auto& v : w.vehicles()) {
      if (v.is_ev() && v.battery_kwh < 0.0) ++violations;
      auto it = prev.find(v.id);
      if (it == prev.end() || v.status == VehicleStatus::departed) continue;
      const Edge& pe = net.edge(it->second.edge);
      double moved;
      if (v.current_edge() == it->second.edge && v.offset >= it->second.offset) {
        moved = v.offset - it->second.offset;
      } else {
        // One slot covers less than one block, so at most one edge boundary is crossed.
        CHECK(net.edge(v.current_edge()).from == pe.to);
        moved = pe.length - it->second.offset + v.offset;
      }
      if (moved > max_ff * 30.0 + 1e-6) ++violations;
    }
    prev.clear();
  }
  CHECK(violations == 0);

  // FIFO fairness: service start order matches arrival order at every station.
  std::map<StationId, std::vector<const Vehicle*>> by_station;
  for (const auto& v : w.vehicles())
    if (v.station && v.charge_start >= 0.0) by_station[*v.station].push_back(&v);
  int served = 0;
  for (auto& [sid, vs] : by_station) {
    std::sort(vs.begin(), vs.end(), [](const Vehicle* a, const Vehicle* b) {
      return std::pair(a->queue_time, a->id) < std::pair(b->queue_time, b->id);
    });
    for (std::size_t i = 1; i < vs.size(); ++i) CHECK(vs[i - 1]->charge_start <= vs[i]->charge_start);
    served += static_cast<int>(vs.size());
  }
  CHECK(served > 0);
}

TEST_CASE("trajectory hash is reproducible and seed-sensitive") {
  RoadNetwork net = gen_grid({});
  auto run = [&](std::uint64_t seed) {
    WorldState w = world_init(net, DemandProfile::double_peak(), 200, 400, seed);
    while (!w.clock().finished()) w.step();
    return w.trajectory_hash();
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("trace records are line-delimited JSON") {
  RoadNetwork net = gen_grid({});
  WorldState w = world_init(net, DemandProfile::double_peak(), 50, 50, 1);
  std::ostringstream out;
  w.set_trace(&out);
  for (int k = 0; k < 400; ++k) w.step();
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("t"));
    CHECK(j.at("z").size() == 5);
    CHECK(j.at("occupancy").size() == net.edge_count());
    ++lines;
  }
  CHECK(lines == 400);
}
