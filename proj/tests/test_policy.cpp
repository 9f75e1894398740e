#include <doctest.h>

#include <array>
#include <random>

#include "evdispatch/error.hpp"
#include "evdispatch/policy.hpp"

using namespace evdispatch;

namespace {

Observation obs_from(std::vector<std::optional<double>> d, std::vector<std::optional<int>> n,
                     std::vector<int> z) {
  return encode_observation(d, n, z, {});
}

}  // namespace

TEST_CASE("greedy picks the nearest reachable station") {
  CHECK(greedy_policy(obs_from({500.0, 300.0, 900.0, 400.0, 800.0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0})) == 1);
  CHECK(greedy_policy(obs_from({300.0, 300.0, 900.0, 400.0, 800.0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0})) == 0);
  CHECK(greedy_policy(obs_from({900.0, 300.0, 1200.0}, {0, 9, 0}, {0, 9, 0})) == 1);
  CHECK(greedy_policy(obs_from({std::nullopt, 800.0, 700.0}, {0, 0, 0}, {0, 0, 0})) == 2);
  CHECK(greedy_policy(obs_from({500.0, 500.0, 600.0}, {0, 0, 0}, {0, 0, 0})) == 0);
  CHECK(greedy_policy(obs_from({700.0}, {40}, {12})) == 0);
  CHECK_THROWS_AS(greedy_policy(obs_from({std::nullopt, std::nullopt}, {0, 0}, {0, 0})), NoActionError);
}

TEST_CASE("greedy depends only on distances") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(10.0, 5000.0);
  std::uniform_int_distribution<int> count(0, 30);
  for (int k = 0; k < 200; ++k) {
    std::vector<std::optional<double>> d;
    std::vector<std::optional<int>> n1, n2;
    std::vector<int> z1, z2;
    for (int j = 0; j < 5; ++j) {
      d.push_back(dist(rng));
      n1.push_back(count(rng));
      n2.push_back(count(rng));
      z1.push_back(count(rng));
      z2.push_back(count(rng));
    }
    const ActionId a = greedy_policy(obs_from(d, n1, z1));
    CHECK(a == greedy_policy(obs_from(d, n2, z2)));
    // A strictly increasing transform of every distance keeps the choice.
    std::vector<std::optional<double>> d2;
    for (auto& x : d) d2.push_back(3.0 * *x + 17.0);
    CHECK(a == greedy_policy(obs_from(d2, n1, z1)));
  }
}

TEST_CASE("argmax breaks ties to the lowest index") {
  std::vector<double> q{1.0, 3.0, 3.0, 2.0};
  CHECK(argmax(q) == 1);
  std::vector<double> empty;
  CHECK_THROWS_AS(argmax(empty), ContractError);
}

TEST_CASE("epsilon greedy extremes and frequencies") {
  std::mt19937_64 rng(5);
  std::vector<double> q{0.1, 0.9, 0.3, 0.2};
  for (int k = 0; k < 100; ++k) CHECK(epsilon_greedy(q, 0.0, rng) == 1);
  CHECK(epsilon_greedy(std::vector<double>{1, 5, 2}, 0.0, rng) == 1);
  std::array<int, 4> hits{};
  for (int k = 0; k < 40000; ++k) ++hits[static_cast<std::size_t>(epsilon_greedy(q, 1.0, rng))];
  for (int h : hits) CHECK(h / 40000.0 == doctest::Approx(0.25).epsilon(0.04));
  int greedy = 0;
  for (int k = 0; k < 40000; ++k) greedy += epsilon_greedy(q, 0.2, rng) == 1;
  CHECK(greedy / 40000.0 == doctest::Approx(0.8 + 0.2 / 4).epsilon(0.02));
  CHECK_THROWS_AS(epsilon_greedy(q, 1.5, rng), ContractError);
  CHECK_THROWS_AS(epsilon_greedy(q, -0.1, rng), ContractError);
}

TEST_CASE("random dispatcher is uniform across episodes and sticky within one") {
  RandomDispatcher d(5, 77);
  Observation obs = obs_from({1.0, 2.0, 3.0, 4.0, 5.0}, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0});
  std::array<int, 5> hits{};
  const int episodes = 10000;
  for (int e = 0; e < episodes; ++e) {
    d.begin_episode();
    const ActionId first = d.act(obs);
    for (int k = 0; k < 4; ++k) CHECK(d.act(obs) == first);
    ++hits[static_cast<std::size_t>(first)];
  }
  double chi2 = 0.0;
  for (int h : hits) {
    CHECK(h / double(episodes) == doctest::Approx(0.2).epsilon(0.1));  // 0.2 +- 0.02
    chi2 += (h - episodes / 5.0) * (h - episodes / 5.0) / (episodes / 5.0);
  }
  CHECK(chi2 < 18.47);  // 4 degrees of freedom, p = 0.001

  RandomDispatcher one(1, 3);
  one.begin_episode();
  CHECK(one.act(obs_from({1.0}, {0}, {0})) == 0);
}

TEST_CASE("policy names") {
  CHECK(parse_policy_kind("random") == PolicyKind::random);
  CHECK(parse_policy_kind("greedy") == PolicyKind::greedy);
  CHECK(parse_policy_kind("dqn") == PolicyKind::dqn);
  CHECK(parse_policy_kind("dueling_ddqn") == PolicyKind::dueling_ddqn);
  CHECK(std::string(to_string(PolicyKind::dueling_ddqn)) == "dueling_ddqn");
  CHECK_THROWS_AS(parse_policy_kind("ppo"), ConfigError);
}
