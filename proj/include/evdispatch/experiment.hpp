#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evdispatch/envapi.hpp"
#include "evdispatch/netgraph.hpp"
#include "evdispatch/policy.hpp"
#include "evdispatch/trainer.hpp"

namespace evdispatch {

const char* version_string();

struct ExperimentConfig {
  std::optional<std::string> network_file;  // generated from `grid` when unset
  GridSpec grid;
  std::vector<int> scenarios{200, 300, 400};
  int n_conventional = 400;
  PolicyKind policy = PolicyKind::greedy;
  TrainConfig train;
  int eval_episodes = 50;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double depart_earliest = 7.0 * 3600.0;
  double depart_latest = 19.0 * 3600.0;
  double decision_interval = 60.0;
  std::string out_dir = "out";

  /// Throws ConfigError when no scenario or seed is given or values are out of range.
  void validate() const;
  EpisodeConfig episode_config(int n_background_ev) const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Overrides fields of `base` from a JSON document; unknown keys throw ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_experiment_config_file(const std::string& path, ExperimentConfig base = {});

/// EVDISPATCH_OUT_DIR wins over the configured directory when set and non-empty.
std::string resolve_out_dir(const std::string& configured);

RoadNetwork load_or_generate_network(const ExperimentConfig& cfg);

struct MetricsRow {
  int scenario = 0;
  PolicyKind policy = PolicyKind::greedy;
  std::uint64_t seed = 0;
  int episode = 0;
  double t_travel = 0.0;
  double reward = 0.0;
  bool horizon_expired = false;
};

/// Seed of evaluation episode `k`; shared by all policies so they face identical episodes.
std::uint64_t eval_episode_seed(std::uint64_t seed, int scenario, int k);

/// One episode driven by `d`; returns T_travel, total reward and the expiry flag.
MetricsRow run_episode(DispatchEnv& env, Dispatcher& d, const EpisodeConfig& cfg);

std::vector<MetricsRow> evaluate(const RoadNetwork& net, const ExperimentConfig& cfg, int scenario,
                                 PolicyKind kind, Dispatcher& d, std::uint64_t seed);

/// Seed for stochastic baselines in an evaluation cell.
std::uint64_t dispatcher_seed(std::uint64_t seed, int scenario);

/// Builds the dispatcher for a policy. RL kinds need parameters.
std::unique_ptr<Dispatcher> make_dispatcher(PolicyKind kind, int m, std::uint64_t seed,
                                            const QNetwork* params = nullptr);

Architecture architecture_for(PolicyKind kind);

/// Default checkpoint file name for an RL policy cell.
std::string checkpoint_name(PolicyKind kind, int scenario, std::uint64_t seed);

struct SummaryCell {
  int scenario = 0;
  PolicyKind policy = PolicyKind::greedy;
  double mean_t_travel = 0.0;
  std::size_t episodes = 0;
  std::vector<std::uint64_t> seeds;
};

/// Mean T_travel per (scenario, policy), ordered by scenario then policy.
std::vector<SummaryCell> summarize(const std::vector<MetricsRow>& rows);

// CSV schemas (header row always written):
//   metrics: scenario,policy,seed,episode,t_travel_s,reward,horizon_expired
//   training: episode,seed,steps,t_travel_s,reward,horizon_expired,mean_loss,xi,gradient_steps
//   summary: scenario,policy,mean_t_travel_s,episodes,seeds   (seeds joined by ';')
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_training_csv(std::ostream& out, const std::vector<EpisodeMetrics>& rows);
void write_summary_csv(std::ostream& out, const std::vector<SummaryCell>& cells);
/// Scenario rows by policy columns, plain text.
std::string format_summary_table(const std::vector<SummaryCell>& cells);

struct SweepResult {
  std::vector<MetricsRow> rows;
  std::vector<SummaryCell> cells;
};

/// Thrown when RL checkpoints needed by a sweep are missing; lists every blocked cell.
class MissingCheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluates all four policies over every (scenario, seed) cell. RL parameters are
/// read from `checkpoint_dir` using checkpoint_name(). Cells run in parallel.
SweepResult run_sweep(const RoadNetwork& net, const ExperimentConfig& cfg,
                      const std::filesystem::path& checkpoint_dir);

/// Run manifest: tool version, command, fully resolved config and written outputs.
nlohmann::json make_manifest(const std::string& command, const ExperimentConfig& cfg,
                             const std::vector<std::string>& outputs,
                             const nlohmann::json& extra = nlohmann::json::object());
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace evdispatch
