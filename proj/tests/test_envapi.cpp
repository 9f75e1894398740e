#include <doctest.h>

#include <random>
#include <sstream>

#include <json.hpp>

#include "evdispatch/envapi.hpp"
#include "evdispatch/error.hpp"
#include "evdispatch/policy.hpp"

using namespace evdispatch;

namespace {

const RoadNetwork& grid() {
  static const RoadNetwork net = gen_grid({});
  return net;
}

EpisodeConfig episode(std::uint64_t seed, int evs = 200) {
  EpisodeConfig c;
  c.n_background_ev = evs;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("reward examples") {
  CHECK(episode_reward(7200.0) == 1.0);
  CHECK(episode_reward(3600.0) == 2.0);
  CHECK(episode_reward(545.0) == doctest::Approx(13.2110091743));
  CHECK(episode_reward(942.0) == doctest::Approx(7.6433121019));
  CHECK_THROWS_AS(episode_reward(0.0), ContractError);
  CHECK_THROWS_AS(episode_reward(-5.0), ContractError);
}

TEST_CASE("normalization is monotone and bounded") {
  CHECK(normalize(0.0, 2000.0) == 0.0);
  CHECK(normalize(2000.0, 2000.0) == 0.5);
  double last = -1.0;
  for (double x = 0.0; x < 1e6; x = x * 1.7 + 1.0) {
    const double v = normalize(x, 50.0);
    CHECK(v > last);
    CHECK(v < 1.0);
    last = v;
  }
}

TEST_CASE("unreachable stations encode at the top of the range") {
  std::vector<std::optional<double>> d{100.0, std::nullopt};
  std::vector<std::optional<int>> n{3, std::nullopt};
  std::vector<int> z{0, 10};
  Observation obs = encode_observation(d, n, z, {});
  REQUIRE(obs.features.size() == 6);
  CHECK(obs.features[0] == doctest::Approx(100.0 / 2100.0));
  CHECK(obs.features[1] == 1.0);
  CHECK(obs.features[2] == doctest::Approx(3.0 / 53.0));
  CHECK(obs.features[3] == 1.0);
  CHECK(obs.features[4] == 0.0);
  CHECK(obs.features[5] == 0.5);
  CHECK(obs.reachable(0));
  CHECK_FALSE(obs.reachable(1));
  std::vector<int> short_z{1};
  CHECK_THROWS_AS(encode_observation(d, n, short_z, {}), ContractError);
}

TEST_CASE("standing on a station anchor encodes zero distance") {
  const RoadNetwork& net = grid();
  const auto w = net.free_flow_weights();
  for (const auto& st : net.stations()) {
    const auto d = station_distances(net, st.anchor, w);
    std::vector<std::optional<int>> n(5, 0);
    std::vector<int> z(5, 0);
    Observation obs = encode_observation(d, n, z, {});
    CHECK(obs.d()[static_cast<std::size_t>(st.id)] == 0.0);
  }
}

TEST_CASE("reset is deterministic per seed") {
  Environment a(grid()), b(grid());
  Observation oa = a.reset(episode(9));
  Observation ob = b.reset(episode(9));
  CHECK(oa.features == ob.features);
  CHECK(a.depart_time() == b.depart_time());
  CHECK(oa.features.size() == 15);
  CHECK(a.depart_time() >= 7 * 3600.0);
  CHECK(a.depart_time() <= 19 * 3600.0);
  CHECK(std::fmod(a.depart_time(), 30.0) == 0.0);
  Environment c(grid());
  c.reset(episode(10));
  CHECK((c.depart_time() != a.depart_time() ||
         c.world().vehicle(c.target()).route != a.world().vehicle(a.target()).route));
}

TEST_CASE("episodes follow the step protocol") {
  Environment env(grid());
  std::mt19937_64 rng(4);
  int finished = 0;
  for (std::uint64_t s = 1; s <= 25; ++s) {
    Observation obs = env.reset(episode(s));
    REQUIRE(env.active());
    RandomDispatcher d(5, s);
    d.begin_episode();
    int steps = 0;
    while (true) {
      const ActionId a = steps % 3 == 0 ? random_action(5, rng) : d.act(obs);
      StepResult r = env.act_and_step(a);
      ++steps;
      CHECK(r.obs.features.size() == 15);
      for (double f : r.obs.features) CHECK((f >= 0.0 && f <= 1.0));
      if (!r.done) {
        CHECK(r.reward == 0.0);
        obs = r.obs;
        continue;
      }
      const Vehicle& tv = env.world().vehicle(env.target());
      CHECK(r.info.t_travel > 0.0);
      if (!r.info.horizon_expired) {
        CHECK(r.info.t_travel == doctest::Approx(tv.charge_start - env.depart_time()));
        CHECK(tv.station.has_value());
        CHECK(r.info.station == *tv.station);
      }
      CHECK(r.reward == doctest::Approx(7200.0 / r.info.t_travel));
      break;
    }
    CHECK_FALSE(env.active());
    CHECK_THROWS_AS(env.act_and_step(0), ContractError);
    ++finished;
  }
  CHECK(finished == 25);
}

TEST_CASE("invalid actions and configurations are rejected") {
  Environment env(grid());
  CHECK_THROWS_AS(env.act_and_step(0), ContractError);
  env.reset(episode(3));
  CHECK_THROWS_AS(env.act_and_step(-1), ContractError);
  CHECK_THROWS_AS(env.act_and_step(5), ContractError);
  CHECK(env.active());
  EpisodeConfig bad = episode(3);
  bad.decision_interval = 45.0;
  CHECK_THROWS_AS(env.reset(bad), ConfigError);
  bad = episode(3);
  bad.depart_latest = 90000.0;
  CHECK_THROWS_AS(env.reset(bad), ConfigError);
}

TEST_CASE("once queued the target is committed to its station") {
  Environment env(grid());
  for (std::uint64_t s = 1; s <= 10; ++s) {
    Observation obs = env.reset(episode(s, 400));
    ActionId a = greedy_policy(obs);
    std::optional<StationId> bound;
    while (true) {
      const auto& tv = env.world().vehicle(env.target());
      if (tv.status != VehicleStatus::driving) bound = tv.station;
      StepResult r = env.act_and_step(bound ? (a + 1) % 5 : a);
      if (bound) CHECK(env.world().vehicle(env.target()).station == bound);
      if (r.done) break;
    }
  }
}

TEST_CASE("episode log holds one JSON record per call") {
  Environment env(grid());
  std::ostringstream out;
  env.set_log(&out);
  Observation obs = env.reset(episode(2));
  int calls = 1;
  while (true) {
    ++calls;
    if (env.act_and_step(greedy_policy(obs)).done) break;
  }
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.at("features").size() == 15);
    CHECK(j.at("d_raw").size() == 5);
    CHECK(j.contains("reward"));
    ++lines;
  }
  CHECK(lines == calls);
}
