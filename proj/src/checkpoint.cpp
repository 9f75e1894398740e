#include "evdispatch/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "evdispatch/error.hpp"

namespace evdispatch {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'E', 'V', 'D', 'Q', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("checkpoint truncated");
  return v;
}

void put_tensors(std::ostream& out, const QNetwork& net) {
  for (const auto& l : net.layers()) {
    out.write(reinterpret_cast<const char*>(l.weights.data()),
              static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
  }
}

void read_doubles(std::istream& in, std::vector<double>& v) {
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw ParseError("checkpoint truncated while reading parameters");
}

QNetwork get_tensors(std::istream& in, Architecture arch, const std::vector<DenseLayer>& shapes) {
  std::vector<DenseLayer> layers;
  for (const auto& s : shapes) {
    DenseLayer l(s.in, s.out);
    read_doubles(in, l.weights);
    read_doubles(in, l.bias);
    layers.push_back(std::move(l));
  }
  return QNetwork::from_layers(arch, std::move(layers));
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"lr", c.adam.lr},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_epsilon", c.adam.epsilon},
          {"batch", c.batch},
          {"buffer_capacity", c.buffer_capacity},
          {"target_sync", c.target_sync},
          {"xi_start", c.xi_start},
          {"xi_end", c.xi_end},
          {"xi_anneal_fraction", c.xi_anneal_fraction},
          {"max_episodes", c.max_episodes},
          {"expected_steps_per_episode", c.expected_steps_per_episode},
          {"grad_clip_norm", c.grad_clip_norm},
          {"updates_per_step", c.updates_per_step},
          {"hidden", c.hidden},
          {"prioritized", c.prioritized},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  static const char* known[] = {"gamma", "lr", "adam_beta1", "adam_beta2", "adam_epsilon", "batch",
                                "buffer_capacity", "target_sync", "xi_start", "xi_end",
                                "xi_anneal_fraction", "max_episodes", "expected_steps_per_episode",
                                "grad_clip_norm", "updates_per_step", "hidden", "prioritized", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ConfigError("unknown train config key '" + key + "'");
  }
  try {
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("gamma", c.gamma);
    opt("lr", c.adam.lr);
    opt("adam_beta1", c.adam.beta1);
    opt("adam_beta2", c.adam.beta2);
    opt("adam_epsilon", c.adam.epsilon);
    opt("batch", c.batch);
    opt("buffer_capacity", c.buffer_capacity);
    opt("target_sync", c.target_sync);
    opt("xi_start", c.xi_start);
    opt("xi_end", c.xi_end);
    opt("xi_anneal_fraction", c.xi_anneal_fraction);
    opt("max_episodes", c.max_episodes);
    opt("expected_steps_per_episode", c.expected_steps_per_episode);
    opt("grad_clip_norm", c.grad_clip_norm);
    opt("updates_per_step", c.updates_per_step);
    opt("hidden", c.hidden);
    opt("prioritized", c.prioritized);
    opt("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

void save_checkpoint(std::ostream& out, const Checkpoint& ck) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& l : ck.params.layers()) shapes.push_back({l.in, l.out});
  const nlohmann::json header = {{"arch", to_string(ck.params.arch())},
                                 {"layers", shapes},
                                 {"adam_t", ck.optimizer.t},
                                 {"train_config", to_json(ck.config)},
                                 {"extra", ck.extra}};
  const std::string text = header.dump();
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_tensors(out, ck.params);
  put_tensors(out, ck.optimizer.m);
  put_tensors(out, ck.optimizer.v);
  if (!out) throw std::runtime_error("failed to write checkpoint");
}

void save_checkpoint_file(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  save_checkpoint(out, ck);
}

Checkpoint load_checkpoint(std::istream& in, std::optional<std::size_t> expected_actions) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ParseError("not a checkpoint file (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in);
  if (len > (1u << 26)) throw ParseError("checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ParseError("checkpoint truncated");

  Checkpoint ck;
  Architecture arch{};
  std::vector<DenseLayer> shapes;
  try {
    const auto header = nlohmann::json::parse(text);
    const auto a = header.at("arch").get<std::string>();
    if (a == "dqn") arch = Architecture::dqn;
    else if (a == "dueling") arch = Architecture::dueling;
    else throw ParseError("unknown architecture '" + a + "'");
    for (const auto& s : header.at("layers")) {
      DenseLayer l;
      l.in = s.at(0).get<std::size_t>();
      l.out = s.at(1).get<std::size_t>();
      if (l.in == 0 || l.out == 0 || l.in > (1u << 20) || l.out > (1u << 20))
        throw ParseError("implausible layer shape in checkpoint");
      shapes.push_back(l);
    }
    if (shapes.empty()) throw ParseError("checkpoint has no layers");
    ck.optimizer.t = header.at("adam_t").get<std::int64_t>();
    ck.config = train_config_from_json(header.at("train_config"));
    ck.extra = header.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  try {
    ck.params = get_tensors(in, arch, shapes);
    ck.optimizer.m = get_tensors(in, arch, shapes);
    ck.optimizer.v = get_tensors(in, arch, shapes);
  } catch (const ContractError& e) {
    throw ParseError(std::string("checkpoint layer shapes do not chain: ") + e.what());
  }
  if (ck.params.state_dim() != 3 * ck.params.actions())
    throw ParseError("checkpoint input width " + std::to_string(ck.params.state_dim()) +
                     " is not three times its output width " + std::to_string(ck.params.actions()));
  if (expected_actions && ck.params.actions() != *expected_actions)
    throw ValidationError("checkpoint has " + std::to_string(ck.params.actions()) +
                          " outputs but the network has " + std::to_string(*expected_actions) +
                          " stations");
  return ck;
}

Checkpoint load_checkpoint_file(const std::string& path, std::optional<std::size_t> expected_actions) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in, expected_actions);
}

}  // namespace evdispatch
