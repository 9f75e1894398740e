#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "evdispatch/learning.hpp"
#include "evdispatch/qnetwork.hpp"
#include "evdispatch/trainer.hpp"

namespace evdispatch {

/// Binary container:
///   "EVDQCKPT" | u32 version | u64 header length | JSON header |
///   parameters, first moments, second moments as little-endian float64,
///   each layer's weights (row-major) then its bias.
/// The header holds the architecture, layer shapes, optimizer step and TrainConfig.
struct Checkpoint {
  QNetwork params;
  AdamState optimizer;
  TrainConfig config;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; wrong types throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

void save_checkpoint(std::ostream& out, const Checkpoint& ck);
void save_checkpoint_file(const std::string& path, const Checkpoint& ck);

/// Throws ParseError on a malformed container. With `expected_actions` set, a
/// network whose output width differs throws ValidationError naming both sizes.
Checkpoint load_checkpoint(std::istream& in, std::optional<std::size_t> expected_actions = {});
Checkpoint load_checkpoint_file(const std::string& path,
                                std::optional<std::size_t> expected_actions = {});

}  // namespace evdispatch
