// evdispatch: network generation, training, evaluation and sweeps.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "evdispatch/checkpoint.hpp"
#include "evdispatch/error.hpp"
#include "evdispatch/experiment.hpp"

namespace fs = std::filesystem;
using namespace evdispatch;

namespace {

enum Exit { kOk = 0, kUsage = 2, kValidation = 3, kRuntime = 4 };

struct CommonOpts {
  std::string config_file;
  std::string network_file;
  std::vector<int> evs;
  std::vector<std::uint64_t> seeds;
  int episodes = 0;
  int n_conventional = 0;
  std::string out_dir;
};

struct Flags {
  CLI::Option* config = nullptr;
  CLI::Option* network = nullptr;
  CLI::Option* evs = nullptr;
  CLI::Option* seeds = nullptr;
  CLI::Option* episodes = nullptr;
  CLI::Option* conventional = nullptr;
  CLI::Option* out = nullptr;
};

Flags add_common(CLI::App* app, CommonOpts& o, const char* episodes_help) {
  Flags f;
  f.config = app->add_option("--config", o.config_file, "JSON config file (or a run manifest)");
  f.network = app->add_option("--network", o.network_file, "network file; default grid when omitted");
  f.evs = app->add_option("--evs", o.evs, "background EV counts (scenarios)");
  f.seeds = app->add_option("--seed,--seeds", o.seeds, "run seeds");
  f.episodes = app->add_option("--episodes", o.episodes, episodes_help)->check(CLI::PositiveNumber);
  f.conventional = app->add_option("--conventional", o.n_conventional, "conventional vehicles")
                       ->check(CLI::NonNegativeNumber);
  f.out = app->add_option("--out-dir", o.out_dir, "output directory (EVDISPATCH_OUT_DIR overrides)");
  return f;
}

ExperimentConfig load_base(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config file '" + path + "': " + e.what());
  }
  // A run manifest carries the resolved config under "config".
  if (j.is_object() && j.contains("tool") && j.contains("config")) return experiment_config_from_json(j.at("config"));
  return experiment_config_from_json(j);
}

ExperimentConfig resolve(const CommonOpts& o, const Flags& f, bool train_episodes) {
  ExperimentConfig cfg = load_base(o.config_file);
  if (f.network->count()) cfg.network_file = o.network_file;
  if (f.evs->count()) cfg.scenarios = o.evs;
  if (f.seeds->count()) cfg.seeds = o.seeds;
  if (f.episodes->count()) {
    if (train_episodes) cfg.train.max_episodes = o.episodes;
    else cfg.eval_episodes = o.episodes;
  }
  if (f.conventional->count()) cfg.n_conventional = o.n_conventional;
  if (f.out->count()) cfg.out_dir = o.out_dir;
  cfg.out_dir = resolve_out_dir(cfg.out_dir);
  cfg.validate();
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string tag(PolicyKind k, int scenario, std::uint64_t seed) {
  return std::string(to_string(k)) + "_evs" + std::to_string(scenario) + "_seed" + std::to_string(seed);
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << s;
}

int cmd_gen_network(const GridSpec& spec, const std::string& output) {
  RoadNetwork net = gen_grid(spec);
  save_network_file(net, output);
  std::cout << "wrote " << output << ": " << net.node_count() << " nodes, " << net.edge_count() << " edges, "
            << net.station_count() << " stations\n";
  return kOk;
}

nlohmann::json dump_batch(const Batch& b, const std::vector<double>& y, const QNetwork& live,
                          const TargetNetwork& target, double gamma, PolicyKind kind) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t n = 0; n < b.size; ++n) {
    std::span<const double> next(b.next_states.data() + n * b.state_dim, b.state_dim);
    rows.push_back({{"action", b.actions[n]},
                    {"reward", b.rewards[n]},
                    {"done", b.done[n] != 0},
                    {"q_live_next", live.forward(next)},
                    {"q_target_next", target.params.forward(next)},
                    {"y", y[n]}});
  }
  return {{"policy", to_string(kind)}, {"gamma", gamma}, {"samples", rows}};
}

int cmd_train(const ExperimentConfig& cfg, const std::string& dump_targets) {
  if (cfg.policy != PolicyKind::dqn && cfg.policy != PolicyKind::dueling_ddqn)
    throw ConfigError("train needs --arch dqn or dueling_ddqn");
  const Architecture arch = architecture_for(cfg.policy);
  RoadNetwork net = load_or_generate_network(cfg);
  ensure_dir(cfg.out_dir);
  std::vector<std::string> outputs;
  nlohmann::json dumped;
  for (int scenario : cfg.scenarios) {
    for (std::uint64_t seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      Environment env(net);
      TrainHooks hooks;
      if (!dump_targets.empty() && dumped.is_null()) {
        hooks.on_targets = [&](std::int64_t, const Batch& b, const std::vector<double>& y, const QNetwork& live,
                               const TargetNetwork& target) {
          if (dumped.is_null()) dumped = dump_batch(b, y, live, target, tc.gamma, cfg.policy);
        };
      }
      std::cerr << "training " << tag(cfg.policy, scenario, seed) << " (" << tc.max_episodes << " episodes)\n";
      TrainResult res = train(env, cfg.episode_config(scenario), tc, arch, hooks);

      const fs::path csv = fs::path(cfg.out_dir) / ("training_" + tag(cfg.policy, scenario, seed) + ".csv");
      std::ofstream out(csv, std::ios::binary);
      write_training_csv(out, res.episodes);
      out.close();
      const fs::path ck = fs::path(cfg.out_dir) / checkpoint_name(cfg.policy, scenario, seed);
      Checkpoint c{res.params, res.optimizer, tc,
                   {{"scenario", scenario}, {"policy", to_string(cfg.policy)}, {"gradient_steps", res.gradient_steps},
                    {"target_syncs", res.target_syncs}}};
      save_checkpoint_file(ck.string(), c);
      outputs.push_back(csv.string());
      outputs.push_back(ck.string());
    }
  }
  if (!dump_targets.empty()) {
    if (dumped.is_null()) throw std::runtime_error("no gradient step ran; nothing to dump");
    write_json_file(dump_targets, dumped);
    outputs.push_back(dump_targets);
  }
  const fs::path manifest = fs::path(cfg.out_dir) / ("manifest_train_" + std::string(to_string(cfg.policy)) + ".json");
  write_json_file(manifest, make_manifest("train", cfg, outputs));
  std::cout << "wrote " << outputs.size() << " files and " << manifest.string() << "\n";
  return kOk;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint) {
  RoadNetwork net = load_or_generate_network(cfg);
  const int m = static_cast<int>(net.station_count());
  std::optional<QNetwork> params;
  const bool rl = cfg.policy == PolicyKind::dqn || cfg.policy == PolicyKind::dueling_ddqn;
  if (rl && checkpoint.empty()) throw ConfigError("--checkpoint is required for RL policies");
  if (rl) params = load_checkpoint_file(checkpoint, static_cast<std::size_t>(m)).params;

  std::vector<MetricsRow> rows;
  for (int scenario : cfg.scenarios) {
    for (std::uint64_t seed : cfg.seeds) {
      auto d = make_dispatcher(cfg.policy, m, dispatcher_seed(seed, scenario), params ? &*params : nullptr);
      auto part = evaluate(net, cfg, scenario, cfg.policy, *d, seed);
      rows.insert(rows.end(), part.begin(), part.end());
    }
  }
  ensure_dir(cfg.out_dir);
  const auto cells = summarize(rows);
  const std::string base = std::string("eval_") + to_string(cfg.policy);
  const fs::path metrics = fs::path(cfg.out_dir) / (base + "_metrics.csv");
  const fs::path summary = fs::path(cfg.out_dir) / (base + "_summary.csv");
  {
    std::ofstream out(metrics, std::ios::binary);
    write_metrics_csv(out, rows);
    std::ofstream sum(summary, std::ios::binary);
    write_summary_csv(sum, cells);
  }
  const fs::path manifest = fs::path(cfg.out_dir) / ("manifest_" + base + ".json");
  write_json_file(manifest, make_manifest("eval", cfg, {metrics.string(), summary.string()},
                                          {{"checkpoint", checkpoint}}));
  std::cout << format_summary_table(cells);
  return kOk;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& checkpoint_dir) {
  RoadNetwork net = load_or_generate_network(cfg);
  const fs::path ckdir = checkpoint_dir.empty() ? fs::path(cfg.out_dir) : fs::path(checkpoint_dir);
  SweepResult res = run_sweep(net, cfg, ckdir);
  ensure_dir(cfg.out_dir);
  const fs::path metrics = fs::path(cfg.out_dir) / "sweep_metrics.csv";
  const fs::path summary = fs::path(cfg.out_dir) / "sweep_summary.csv";
  const fs::path table = fs::path(cfg.out_dir) / "sweep_table.txt";
  {
    std::ofstream out(metrics, std::ios::binary);
    write_metrics_csv(out, res.rows);
    std::ofstream sum(summary, std::ios::binary);
    write_summary_csv(sum, res.cells);
  }
  const std::string text = format_summary_table(res.cells);
  write_text(table, text);
  write_json_file(fs::path(cfg.out_dir) / "manifest_sweep.json",
                  make_manifest("sweep", cfg, {metrics.string(), summary.string(), table.string()},
                                {{"checkpoint_dir", ckdir.string()}}));
  std::cout << text;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EV charging dispatch simulator and Q-learning toolkit"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-network", "generate a grid network with charging stations");
  GridSpec grid;
  std::string gen_out;
  gen->add_option("--rows", grid.rows, "grid rows")->required()->check(CLI::PositiveNumber);
  gen->add_option("--cols", grid.cols, "grid columns")->required()->check(CLI::PositiveNumber);
  gen->add_option("--stations", grid.n_stations, "charging stations")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", grid.seed, "placement seed")->required();
  gen->add_option("-o,--output", gen_out, "output file")->required();
  gen->add_option("--block-len", grid.block_len, "block length in metres")->capture_default_str();
  gen->add_option("--speed", grid.speed, "free-flow speed in m/s")->capture_default_str();
  gen->add_option("--capacity", grid.capacity, "vehicles per edge at free flow")->capture_default_str();
  gen->add_option("--plugs", grid.plugs, "plugs per station")->capture_default_str();
  gen->add_option("--power-kw", grid.power_kw, "charging power per plug")->capture_default_str();
  gen->add_option("--min-station-dist", grid.min_station_dist, "minimum station spacing (m)")->capture_default_str();

  auto* tr = app.add_subcommand("train", "train a dqn or dueling_ddqn dispatcher");
  CommonOpts tro;
  Flags trf = add_common(tr, tro, "training episodes");
  std::string arch_name;
  std::string dump_targets;
  double lr = 0.0, gamma = 0.0;
  int batch = 0, updates = 0;
  std::int64_t sync = 0;
  bool prioritized = false;
  auto* arch_opt = tr->add_option("--arch", arch_name, "dqn or dueling_ddqn")
                       ->check(CLI::IsMember({"dqn", "dueling_ddqn"}));
  auto* lr_opt = tr->add_option("--lr", lr, "learning rate")->check(CLI::PositiveNumber);
  auto* gamma_opt = tr->add_option("--gamma", gamma, "discount");
  auto* batch_opt = tr->add_option("--batch", batch, "minibatch size")->check(CLI::PositiveNumber);
  auto* sync_opt = tr->add_option("--target-sync", sync, "gradient steps between target syncs");
  auto* upd_opt = tr->add_option("--updates-per-step", updates, "gradient steps per env step");
  auto* pri_opt = tr->add_flag("--prioritized", prioritized, "prioritized replay");
  tr->add_option("--dump-targets", dump_targets, "write the first minibatch and its targets as JSON");

  auto* ev = app.add_subcommand("eval", "evaluate one policy");
  CommonOpts evo;
  Flags evf = add_common(ev, evo, "evaluation episodes per seed");
  std::string policy_name;
  std::string checkpoint;
  auto* policy_opt = ev->add_option("--policy", policy_name, "random, greedy, dqn or dueling_ddqn")
                         ->check(CLI::IsMember({"random", "greedy", "dqn", "dueling_ddqn"}));
  ev->add_option("--checkpoint", checkpoint, "parameters for RL policies");

  auto* sw = app.add_subcommand("sweep", "evaluate all policies over every scenario");
  CommonOpts swo;
  Flags swf = add_common(sw, swo, "evaluation episodes per seed");
  std::string checkpoint_dir;
  sw->add_option("--checkpoint-dir", checkpoint_dir, "directory holding trained checkpoints (default out dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_network(grid, gen_out);
    if (*tr) {
      ExperimentConfig cfg = resolve(tro, trf, true);
      if (arch_opt->count()) cfg.policy = parse_policy_kind(arch_name);
      else if (cfg.policy != PolicyKind::dqn && cfg.policy != PolicyKind::dueling_ddqn) cfg.policy = PolicyKind::dqn;
      if (lr_opt->count()) cfg.train.adam.lr = lr;
      if (gamma_opt->count()) cfg.train.gamma = gamma;
      if (batch_opt->count()) cfg.train.batch = static_cast<std::size_t>(batch);
      if (sync_opt->count()) cfg.train.target_sync = sync;
      if (upd_opt->count()) cfg.train.updates_per_step = updates;
      if (pri_opt->count()) cfg.train.prioritized = prioritized;
      cfg.validate();
      return cmd_train(cfg, dump_targets);
    }
    if (*ev) {
      ExperimentConfig cfg = resolve(evo, evf, false);
      if (policy_opt->count()) cfg.policy = parse_policy_kind(policy_name);
      return cmd_eval(cfg, checkpoint);
    }
    if (*sw) return cmd_sweep(resolve(swo, swf, false), checkpoint_dir);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const MissingCheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
