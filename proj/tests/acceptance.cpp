// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "evdispatch/envapi.hpp"
#include "evdispatch/error.hpp"
#include "evdispatch/experiment.hpp"
#include "evdispatch/learning.hpp"
#include "evdispatch/policy.hpp"
#include "evdispatch/replay.hpp"
#include "evdispatch/seeding.hpp"
#include "evdispatch/simcore.hpp"
#include "evdispatch/trainer.hpp"
#include "oracles.hpp"
#include "toy_env.hpp"

using namespace evdispatch;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double mean_t(const std::vector<MetricsRow>& rows) {
  double s = 0.0;
  for (const auto& r : rows) s += r.t_travel;
  return s / static_cast<double>(rows.size());
}

/// Least-squares slope of the 5-episode trailing moving average of episode reward.
double ma5_slope(const std::vector<EpisodeMetrics>& eps) {
  std::vector<double> ma;
  for (std::size_t i = 4; i < eps.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = i - 4; k <= i; ++k) s += eps[k].reward;
    ma.push_back(s / 5.0);
  }
  const double n = static_cast<double>(ma.size());
  const double xbar = (n - 1.0) / 2.0;
  const double ybar = std::accumulate(ma.begin(), ma.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    sxy += (static_cast<double>(i) - xbar) * (ma[i] - ybar);
    sxx += (static_cast<double>(i) - xbar) * (static_cast<double>(i) - xbar);
  }
  return sxy / sxx;
}

struct Report {
  int failures = 0;
  void line(int id, bool ok, const std::string& detail) {
    std::cout << "criterion " << id << ": " << (ok ? "PASS" : "FAIL") << "  " << detail << std::endl;
    if (!ok) ++failures;
  }
};

struct RlRun {
  TrainResult result;
  double seconds = 0.0;
};

}  // namespace

int main() {
  Report report;
  const RoadNetwork net = gen_grid({});
  const int m = static_cast<int>(net.station_count());
  ExperimentConfig cfg;  // 50 evaluation episodes, seeds 1-3, scenarios 200/300/400

  // Training runs shared by criteria 1, 2 and 9.
  std::map<std::pair<int, std::uint64_t>, RlRun> dqn_runs, duel_runs;
  auto train_cell = [&](int scenario, std::uint64_t seed, Architecture arch) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    Environment env(net);
    const auto t0 = Clock::now();
    RlRun run{train(env, cfg.episode_config(scenario), tc, arch), 0.0};
    run.seconds = seconds_since(t0);
    return run;
  };

  // 1. Baseline ordering and DQN improvement over greedy.
  {
    bool ok = true;
    std::ostringstream detail;
    for (int scenario : cfg.scenarios) {
      std::vector<MetricsRow> random_all, greedy_all;
      int dqn_wins = 0;
      for (std::uint64_t seed : cfg.seeds) {
        auto rd = make_dispatcher(PolicyKind::random, m, dispatcher_seed(seed, scenario));
        auto gd = make_dispatcher(PolicyKind::greedy, m, dispatcher_seed(seed, scenario));
        auto rr = evaluate(net, cfg, scenario, PolicyKind::random, *rd, seed);
        auto gr = evaluate(net, cfg, scenario, PolicyKind::greedy, *gd, seed);
        RlRun& run = dqn_runs[{scenario, seed}] = train_cell(scenario, seed, Architecture::dqn);
        auto qd = make_dispatcher(PolicyKind::dqn, m, dispatcher_seed(seed, scenario), &run.result.params);
        auto qr = evaluate(net, cfg, scenario, PolicyKind::dqn, *qd, seed);
        const double g = mean_t(gr), q = mean_t(qr);
        if (q < g) ++dqn_wins;
        detail << " [evs=" << scenario << " seed=" << seed << " dqn=" << q << " greedy=" << g
               << " random=" << mean_t(rr) << "]";
        random_all.insert(random_all.end(), rr.begin(), rr.end());
        greedy_all.insert(greedy_all.end(), gr.begin(), gr.end());
      }
      const bool order = mean_t(greedy_all) < mean_t(random_all);
      ok = ok && order && dqn_wins >= 2;
      detail << " evs=" << scenario << ": greedy<random " << (order ? "yes" : "no") << ", dqn<greedy in "
             << dqn_wins << "/3 seeds;";
    }
    report.line(1, ok, detail.str());
  }

  // 2. Dueling double-Q at least as good as DQN under the heaviest load.
  {
    const int scenario = 400;
    int wins = 0;
    std::ostringstream detail;
    for (std::uint64_t seed : cfg.seeds) {
      RlRun& run = duel_runs[{scenario, seed}] = train_cell(scenario, seed, Architecture::dueling);
      auto dd = make_dispatcher(PolicyKind::dueling_ddqn, m, dispatcher_seed(seed, scenario), &run.result.params);
      auto qd = make_dispatcher(PolicyKind::dqn, m, dispatcher_seed(seed, scenario),
                                &dqn_runs.at({scenario, seed}).result.params);
      const double d = mean_t(evaluate(net, cfg, scenario, PolicyKind::dueling_ddqn, *dd, seed));
      const double q = mean_t(evaluate(net, cfg, scenario, PolicyKind::dqn, *qd, seed));
      if (d <= q) ++wins;
      detail << " [seed=" << seed << " dueling=" << d << " dqn=" << q << "]";
    }
    detail << " dueling<=dqn in " << wins << "/3 seeds";
    report.line(2, wins >= 2, detail.str());
  }

  // 3. Reward arithmetic.
  {
    bool ok = episode_reward(7200.0) == 1.0 && episode_reward(3600.0) == 2.0 &&
              std::abs(episode_reward(942.0) - 7.643312101910828) < 1e-12;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> t(1.0, 86400.0);
    int bad = 0;
    for (int k = 0; k < 1000; ++k) {
      const double x = t(rng);
      if (std::abs(episode_reward(x) - 7200.0 / x) > 1e-12 * (7200.0 / x)) ++bad;
    }
    bool throws = false;
    try {
      episode_reward(0.0);
    } catch (const ContractError&) {
      throws = true;
    }
    ok = ok && bad == 0 && throws;
    report.line(3, ok, "1000 random values, mismatches=" + std::to_string(bad) +
                           ", non-positive rejected=" + (throws ? "yes" : "no"));
  }

  // 4. Episode protocol over random episodes.
  {
    Environment env(net);
    std::mt19937_64 rng(4);
    int bad = 0, episodes = 0;
    for (std::uint64_t s = 1; s <= 100; ++s) {
      EpisodeConfig ec = cfg.episode_config(cfg.scenarios[s % 3]);
      ec.seed = derive_seed({s, 0xacce55ULL});
      Observation obs = env.reset(ec);
      if (obs.features.size() != 15) ++bad;
      for (int steps = 0;; ++steps) {
        StepResult r = env.act_and_step(random_action(m, rng));
        if (r.obs.features.size() != 15) ++bad;
        for (double f : r.obs.features)
          if (!(f >= 0.0 && f <= 1.0)) ++bad;
        if (!r.done) {
          if (r.reward != 0.0) ++bad;
          continue;
        }
        const Vehicle& tv = env.world().vehicle(env.target());
        const double expect_t =
            r.info.horizon_expired ? 86400.0 - env.depart_time() : tv.charge_start - env.depart_time();
        if (std::abs(r.info.t_travel - expect_t) > 1e-9) ++bad;
        if (std::abs(r.reward - 7200.0 / expect_t) > 1e-9) ++bad;
        break;
      }
      bool rejected = false;
      try {
        env.act_and_step(0);
      } catch (const ContractError&) {
        rejected = true;
      }
      if (!rejected) ++bad;
      ++episodes;
    }
    report.line(4, bad == 0 && episodes == 100,
                std::to_string(episodes) + " episodes, protocol violations=" + std::to_string(bad));
  }

  // 5. Gradient check.
  {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(5);
    double worst = 0.0;
    int nets = 0;
    for (Architecture arch : {Architecture::dqn, Architecture::dueling}) {
      for (int k = 0; k < 12; ++k) {
        auto c = oracle::random_grad_case(rng, arch);
        const auto analytic = oracle::flatten(loss_and_gradients(c.net, c.batch, c.y).grads);
        const auto numeric = oracle::numeric_gradient(c.net, c.batch, c.y, 1e-4);
        worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
        ++nets;
      }
    }
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << nets << " networks, max relative error " << worst << ", " << secs << " s";
    report.line(5, nets >= 20 && worst <= 1e-4 && secs < 10.0, d.str());
  }

  // 6. Shortest paths against exhaustive search.
  {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(6);
    int graphs = 0, queries = 0, bad = 0;
    for (; graphs < 250; ++graphs) {
      RoadNetwork g = oracle::random_graph(rng, 9, graphs % 2 == 1);
      const auto w = g.free_flow_weights();
      std::uniform_int_distribution<EdgeId> pick(0, static_cast<EdgeId>(g.edge_count()) - 1);
      for (int k = 0; k < 4; ++k) {
        const EdgeId a = pick(rng), b = pick(rng);
        const double off = std::uniform_real_distribution<double>(0.0, g.edge(a).length)(rng);
        auto got = shortest_path(g, a, off, b, w);
        auto want = oracle::brute_shortest(g, a, off, b, w);
        ++queries;
        if (!got || !want || std::abs(got->est_travel_time - want->cost) > 1e-9 * (1.0 + want->cost) ||
            got->edges != want->edges)
          ++bad;
      }
    }
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << graphs << " graphs, " << queries << " queries, mismatches=" << bad << ", " << secs << " s";
    report.line(6, graphs >= 200 && bad == 0 && secs < 30.0, d.str());
  }

  // 7. Full-day conservation and reproducibility.
  {
    const auto t0 = Clock::now();
    auto run = [&](int& violations) {
      WorldState w = world_init(net, DemandProfile::double_peak(), 400, 400, 77);
      int steps = 0;
      while (!w.clock().finished()) {
        w.step();
        ++steps;
        if (w.status_counts().total() != w.spawned() || !w.check_invariants().empty()) ++violations;
      }
      return std::pair(steps, w.trajectory_hash());
    };
    int v1 = 0, v2 = 0;
    const auto a = run(v1);
    const auto b = run(v2);
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << a.first << " steps, violations=" << v1 + v2 << ", hashes " << (a.second == b.second ? "equal" : "differ")
      << ", " << secs << " s for two days";
    report.line(7, a.first == 2880 && v1 + v2 == 0 && a.second == b.second && secs <= 30.0, d.str());
  }

  // 8. Replay eviction and target synchronization cadence.
  {
    ReplayBuffer buf(10000);
    for (int i = 0; i <= 10000; ++i) {
      Transition t;
      t.state = {static_cast<double>(i)};
      t.next_state = {0.0};
      t.reward = i;
      buf.push(t);
    }
    const bool evicted = buf.size() == 10000 && buf[0].reward == 1.0 && buf[9999].reward == 10000.0;

    toy::ChainEnv env(5, 10, 3);
    TrainConfig tc;
    tc.hidden = {8};
    tc.max_episodes = 1700;
    tc.seed = 8;
    std::optional<QNetwork> frozen;
    std::vector<std::int64_t> sync_steps;
    int drift = 0;
    TrainHooks hooks;
    hooks.on_gradient_step = [&](std::int64_t step, const QNetwork& live, const TargetNetwork& target) {
      if (!frozen) frozen = target.params;
      if (target.params == *frozen) return;
      if (target.params == live) {
        sync_steps.push_back(step);
        frozen = target.params;
      } else {
        ++drift;
      }
    };
    TrainResult r = train(env, {}, tc, Architecture::dqn, hooks);
    const bool cadence = sync_steps == std::vector<std::int64_t>{8000, 16000} && drift == 0 && r.target_syncs == 2;
    std::ostringstream d;
    d << "eviction " << (evicted ? "ok" : "wrong") << "; " << r.gradient_steps << " gradient steps, syncs at";
    for (auto s : sync_steps) d << ' ' << s;
    d << ", unexpected target changes=" << drift;
    report.line(8, evicted && cadence, d.str());
  }

  // 9. Training budget and reward trend, reusing the 300-EV DQN runs.
  {
    int trending = 0;
    double slowest = 0.0;
    std::ostringstream d;
    for (std::uint64_t seed : cfg.seeds) {
      const RlRun& run = dqn_runs.at({300, seed});
      const double slope = ma5_slope(run.result.episodes);
      if (slope > 0.0) ++trending;
      slowest = std::max(slowest, run.seconds);
      d << " [seed=" << seed << " episodes=" << run.result.episodes.size() << " ma5 slope=" << slope
        << " time=" << run.seconds << " s]";
    }
    d << " rising in " << trending << "/3 seeds";
    report.line(9, trending >= 1 && slowest <= 1800.0 && dqn_runs.at({300, 1}).result.episodes.size() == 50,
                d.str());
  }

  std::cout << (report.failures == 0 ? "all criteria passed" : std::to_string(report.failures) + " criteria failed")
            << std::endl;
  return report.failures == 0 ? 0 : 1;
}
