#include "evdispatch/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "evdispatch/checkpoint.hpp"
#include "evdispatch/error.hpp"
#include "evdispatch/seeding.hpp"

#ifndef EVD_VERSION
#define EVD_VERSION "dev"
#endif

namespace evdispatch {

const char* version_string() { return EVD_VERSION; }

void ExperimentConfig::validate() const {
  if (scenarios.empty()) throw ConfigError("at least one scenario EV count is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  for (int s : scenarios)
    if (s < 0) throw ConfigError("scenario EV counts must be non-negative");
  if (n_conventional < 0) throw ConfigError("conventional vehicle count must be non-negative");
  if (eval_episodes <= 0) throw ConfigError("eval episodes must be positive");
  if (!(depart_earliest >= 0.0 && depart_latest >= depart_earliest && depart_latest < 86400.0))
    throw ConfigError("departure window must lie within the day");
  if (!(decision_interval > 0.0)) throw ConfigError("decision interval must be positive");
  train.validate();
}

EpisodeConfig ExperimentConfig::episode_config(int n_background_ev) const {
  EpisodeConfig e;
  e.n_background_ev = n_background_ev;
  e.n_conventional = n_conventional;
  e.depart_earliest = depart_earliest;
  e.depart_latest = depart_latest;
  e.decision_interval = decision_interval;
  return e;
}

namespace {

nlohmann::json grid_to_json(const GridSpec& g) {
  return {{"rows", g.rows},
          {"cols", g.cols},
          {"block_len", g.block_len},
          {"speed", g.speed},
          {"capacity", g.capacity},
          {"n_stations", g.n_stations},
          {"min_station_dist", g.min_station_dist},
          {"plugs", g.plugs},
          {"power_kw", g.power_kw},
          {"seed", g.seed}};
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string("unknown ") + where + " key '" + key + "'");
  }
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"network_file", c.network_file ? nlohmann::json(*c.network_file) : nlohmann::json(nullptr)},
          {"grid", grid_to_json(c.grid)},
          {"scenarios", c.scenarios},
          {"n_conventional", c.n_conventional},
          {"policy", to_string(c.policy)},
          {"train", to_json(c.train)},
          {"eval_episodes", c.eval_episodes},
          {"seeds", c.seeds},
          {"depart_earliest", c.depart_earliest},
          {"depart_latest", c.depart_latest},
          {"decision_interval", c.decision_interval},
          {"out_dir", c.out_dir}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"network_file", "grid", "scenarios", "n_conventional", "policy", "train",
                  "eval_episodes", "seeds", "depart_earliest", "depart_latest", "decision_interval",
                  "out_dir"},
                 "config");
  try {
    if (j.contains("network_file")) {
      const auto& nf = j.at("network_file");
      c.network_file = nf.is_null() ? std::nullopt : std::optional<std::string>(nf.get<std::string>());
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      reject_unknown(g,
                     {"rows", "cols", "block_len", "speed", "capacity", "n_stations",
                      "min_station_dist", "plugs", "power_kw", "seed"},
                     "grid");
      take(g, "rows", c.grid.rows);
      take(g, "cols", c.grid.cols);
      take(g, "block_len", c.grid.block_len);
      take(g, "speed", c.grid.speed);
      take(g, "capacity", c.grid.capacity);
      take(g, "n_stations", c.grid.n_stations);
      take(g, "min_station_dist", c.grid.min_station_dist);
      take(g, "plugs", c.grid.plugs);
      take(g, "power_kw", c.grid.power_kw);
      take(g, "seed", c.grid.seed);
    }
    take(j, "scenarios", c.scenarios);
    take(j, "n_conventional", c.n_conventional);
    if (j.contains("policy")) c.policy = parse_policy_kind(j.at("policy").get<std::string>());
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    take(j, "eval_episodes", c.eval_episodes);
    take(j, "seeds", c.seeds);
    take(j, "depart_earliest", c.depart_earliest);
    take(j, "depart_latest", c.depart_latest);
    take(j, "decision_interval", c.decision_interval);
    take(j, "out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config_file(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config file '" + path + "': " + e.what());
  }
  return experiment_config_from_json(j, std::move(base));
}

std::string resolve_out_dir(const std::string& configured) {
  const char* env = std::getenv("EVDISPATCH_OUT_DIR");
  if (env && *env) return env;
  return configured;
}

RoadNetwork load_or_generate_network(const ExperimentConfig& cfg) {
  if (cfg.network_file) return load_network_file(*cfg.network_file);
  return gen_grid(cfg.grid);
}

std::uint64_t eval_episode_seed(std::uint64_t seed, int scenario, int k) {
  return derive_seed({seed, 0x6576616cULL, static_cast<std::uint64_t>(scenario), static_cast<std::uint64_t>(k)});
}

MetricsRow run_episode(DispatchEnv& env, Dispatcher& d, const EpisodeConfig& cfg) {
  d.begin_episode();
  Observation obs = env.reset(cfg);
  MetricsRow row;
  for (;;) {
    StepResult r = env.act_and_step(d.act(obs));
    row.reward += r.reward;
    if (r.done) {
      row.t_travel = r.info.t_travel;
      row.horizon_expired = r.info.horizon_expired;
      return row;
    }
    obs = std::move(r.obs);
  }
}

std::vector<MetricsRow> evaluate(const RoadNetwork& net, const ExperimentConfig& cfg, int scenario,
                                 PolicyKind kind, Dispatcher& d, std::uint64_t seed) {
  Environment env(net);
  std::vector<MetricsRow> rows;
  rows.reserve(static_cast<std::size_t>(cfg.eval_episodes));
  for (int k = 0; k < cfg.eval_episodes; ++k) {
    EpisodeConfig e = cfg.episode_config(scenario);
    e.seed = eval_episode_seed(seed, scenario, k);
    MetricsRow row = run_episode(env, d, e);
    row.scenario = scenario;
    row.policy = kind;
    row.seed = seed;
    row.episode = k;
    rows.push_back(row);
  }
  return rows;
}

std::uint64_t dispatcher_seed(std::uint64_t seed, int scenario) {
  return derive_seed({seed, 0x64697370ULL, static_cast<std::uint64_t>(scenario)});
}

Architecture architecture_for(PolicyKind kind) {
  if (kind == PolicyKind::dqn) return Architecture::dqn;
  if (kind == PolicyKind::dueling_ddqn) return Architecture::dueling;
  throw ConfigError(std::string("policy '") + to_string(kind) + "' is not trainable");
}

std::unique_ptr<Dispatcher> make_dispatcher(PolicyKind kind, int m, std::uint64_t seed,
                                            const QNetwork* params) {
  switch (kind) {
    case PolicyKind::random:
      return std::make_unique<RandomDispatcher>(m, derive_seed({seed, 0x72616e64ULL}));
    case PolicyKind::greedy:
      return std::make_unique<GreedyDispatcher>();
    case PolicyKind::dqn:
    case PolicyKind::dueling_ddqn:
      if (!params) throw ConfigError(std::string("policy '") + to_string(kind) + "' needs a checkpoint");
      if (params->actions() != static_cast<std::size_t>(m))
        throw ValidationError("checkpoint has " + std::to_string(params->actions()) +
                              " outputs but the network has " + std::to_string(m) + " stations");
      if (params->arch() != architecture_for(kind))
        throw ValidationError(std::string("checkpoint architecture '") + to_string(params->arch()) +
                              "' does not match policy '" + to_string(kind) + "'");
      return std::make_unique<QDispatcher>(*params);
  }
  throw ConfigError("unknown policy");
}

std::string checkpoint_name(PolicyKind kind, int scenario, std::uint64_t seed) {
  return std::string(to_string(kind)) + "_evs" + std::to_string(scenario) + "_seed" +
         std::to_string(seed) + ".ckpt";
}

std::vector<SummaryCell> summarize(const std::vector<MetricsRow>& rows) {
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    std::set<std::uint64_t> seeds;
  };
  std::map<std::pair<int, int>, Acc> acc;
  for (const auto& r : rows) {
    Acc& a = acc[{r.scenario, static_cast<int>(r.policy)}];
    a.sum += r.t_travel;
    ++a.n;
    a.seeds.insert(r.seed);
  }
  std::vector<SummaryCell> cells;
  for (const auto& [key, a] : acc) {
    SummaryCell c;
    c.scenario = key.first;
    c.policy = static_cast<PolicyKind>(key.second);
    c.mean_t_travel = a.sum / static_cast<double>(a.n);
    c.episodes = a.n;
    c.seeds.assign(a.seeds.begin(), a.seeds.end());
    cells.push_back(std::move(c));
  }
  return cells;
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "scenario,policy,seed,episode,t_travel_s,reward,horizon_expired\n";
  for (const auto& r : rows)
    out << r.scenario << ',' << to_string(r.policy) << ',' << r.seed << ',' << r.episode << ','
        << fmt(r.t_travel) << ',' << fmt(r.reward) << ',' << (r.horizon_expired ? 1 : 0) << '\n';
}

void write_training_csv(std::ostream& out, const std::vector<EpisodeMetrics>& rows) {
  out << "episode,seed,steps,t_travel_s,reward,horizon_expired,mean_loss,xi,gradient_steps\n";
  for (const auto& r : rows)
    out << r.episode << ',' << r.seed << ',' << r.steps << ',' << fmt(r.t_travel) << ','
        << fmt(r.reward) << ',' << (r.horizon_expired ? 1 : 0) << ',' << fmt(r.mean_loss) << ','
        << fmt(r.xi) << ',' << r.gradient_steps << '\n';
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryCell>& cells) {
  out << "scenario,policy,mean_t_travel_s,episodes,seeds\n";
  for (const auto& c : cells) {
    out << c.scenario << ',' << to_string(c.policy) << ',' << fmt(c.mean_t_travel) << ',' << c.episodes
        << ',';
    for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? ";" : "") << c.seeds[i];
    out << '\n';
  }
}

std::string format_summary_table(const std::vector<SummaryCell>& cells) {
  std::set<int> scenarios;
  std::set<int> policies;
  std::map<std::pair<int, int>, double> value;
  for (const auto& c : cells) {
    scenarios.insert(c.scenario);
    policies.insert(static_cast<int>(c.policy));
    value[{c.scenario, static_cast<int>(c.policy)}] = c.mean_t_travel;
  }
  std::ostringstream s;
  s << "mean T_travel (s)\n" << std::left << std::setw(10) << "EVs";
  for (int p : policies) s << std::right << std::setw(14) << to_string(static_cast<PolicyKind>(p));
  s << '\n';
  for (int sc : scenarios) {
    s << std::left << std::setw(10) << sc;
    for (int p : policies) {
      auto it = value.find({sc, p});
      s << std::right << std::setw(14);
      if (it == value.end()) s << "-";
      else s << std::fixed << std::setprecision(1) << it->second;
    }
    s << '\n';
  }
  return s.str();
}

SweepResult run_sweep(const RoadNetwork& net, const ExperimentConfig& cfg,
                      const std::filesystem::path& checkpoint_dir) {
  cfg.validate();
  const PolicyKind kinds[] = {PolicyKind::random, PolicyKind::greedy, PolicyKind::dqn,
                              PolicyKind::dueling_ddqn};
  struct Cell {
    int scenario;
    std::uint64_t seed;
    PolicyKind kind;
    std::optional<QNetwork> params;
  };
  std::vector<Cell> cells;
  std::vector<std::string> blocked;
  const auto m = net.station_count();
  for (int sc : cfg.scenarios)
    for (std::uint64_t seed : cfg.seeds)
      for (PolicyKind k : kinds) {
        Cell c{sc, seed, k, std::nullopt};
        if (k == PolicyKind::dqn || k == PolicyKind::dueling_ddqn) {
          const auto path = checkpoint_dir / checkpoint_name(k, sc, seed);
          if (!std::filesystem::exists(path)) {
            blocked.push_back(std::string(to_string(k)) + " evs=" + std::to_string(sc) +
                              " seed=" + std::to_string(seed) + " (" + path.string() + ")");
            continue;
          }
          c.params = load_checkpoint_file(path.string(), m).params;
        }
        cells.push_back(std::move(c));
      }
  if (!blocked.empty()) {
    std::string msg = "missing checkpoints block " + std::to_string(blocked.size()) + " cell(s):";
    for (const auto& b : blocked) msg += "\n  " + b;
    throw MissingCheckpointError(msg);
  }

  std::vector<std::vector<MetricsRow>> out(cells.size());
  std::vector<std::string> errors(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < cells.size(); ++i) {
    try {
      const Cell& c = cells[i];
      auto d = make_dispatcher(c.kind, static_cast<int>(m), dispatcher_seed(c.seed, c.scenario),
                               c.params ? &*c.params : nullptr);
      out[i] = evaluate(net, cfg, c.scenario, c.kind, *d, c.seed);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error("sweep cell failed: " + e);

  SweepResult res;
  for (auto& rows : out) res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  res.cells = summarize(res.rows);
  return res;
}

nlohmann::json make_manifest(const std::string& command, const ExperimentConfig& cfg,
                             const std::vector<std::string>& outputs, const nlohmann::json& extra) {
  return {{"tool", "evdispatch"},
          {"version", version_string()},
          {"command", command},
          {"config", to_json(cfg)},
          {"outputs", outputs},
          {"extra", extra}};
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace evdispatch
