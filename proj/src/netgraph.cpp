#include "evdispatch/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "evdispatch/error.hpp"

namespace evdispatch {

namespace {

using json = nlohmann::json;

constexpr const char* kNetworkFormat = "evdispatch-network/1";

std::vector<NodeId> unreachable_nodes(std::size_t n, std::span<const Edge> edges, bool reverse) {
  std::vector<std::vector<NodeId>> adj(n);
  for (const auto& e : edges) {
    if (reverse)
      adj[static_cast<std::size_t>(e.to)].push_back(e.from);
    else
      adj[static_cast<std::size_t>(e.from)].push_back(e.to);
  }
  std::vector<char> seen(n, 0);
  std::vector<NodeId> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    for (NodeId v : adj[static_cast<std::size_t>(u)]) {
      if (!seen[static_cast<std::size_t>(v)]) {
        seen[static_cast<std::size_t>(v)] = 1;
        stack.push_back(v);
      }
    }
  }
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) out.push_back(static_cast<NodeId>(i));
  return out;
}

}  // namespace

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges,
                         std::vector<StationSite> stations, double min_station_dist)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      stations_(std::move(stations)),
      min_station_dist_(min_station_dist) {
  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  std::sort(nodes_.begin(), nodes_.end(), by_id);
  std::sort(edges_.begin(), edges_.end(), by_id);
  std::sort(stations_.begin(), stations_.end(), by_id);

  if (nodes_.empty()) throw ParseError("network has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != static_cast<NodeId>(i))
      throw ParseError("nodes: ids must be unique and dense from 0; offending id " +
                       std::to_string(nodes_[i].id));
    if (!std::isfinite(nodes_[i].x) || !std::isfinite(nodes_[i].y))
      throw ParseError("node " + std::to_string(nodes_[i].id) + ": non-finite coordinate");
  }
  const auto n_nodes = static_cast<NodeId>(nodes_.size());
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    const std::string tag = "edge " + std::to_string(e.id);
    if (e.id != static_cast<EdgeId>(i))
      throw ParseError("edges: ids must be unique and dense from 0; offending id " +
                       std::to_string(e.id));
    if (e.from < 0 || e.from >= n_nodes)
      throw ParseError(tag + ": unknown node " + std::to_string(e.from));
    if (e.to < 0 || e.to >= n_nodes)
      throw ParseError(tag + ": unknown node " + std::to_string(e.to));
    if (e.from == e.to) throw ParseError(tag + ": from == to");
    if (!(e.length > 0.0) || !std::isfinite(e.length))
      throw ParseError(tag + ": length must be positive");
    if (!(e.free_flow_speed > 0.0) || !std::isfinite(e.free_flow_speed))
      throw ParseError(tag + ": speed must be positive");
    if (e.capacity < 1) throw ParseError(tag + ": capacity must be >= 1");
  }
  for (std::size_t i = 0; i < stations_.size(); ++i) {
    const StationSite& s = stations_[i];
    const std::string tag = "station " + std::to_string(s.id);
    if (s.id != static_cast<StationId>(i))
      throw ParseError("stations: ids must be unique and dense from 0; offending id " +
                       std::to_string(s.id));
    if (s.anchor.edge < 0 || s.anchor.edge >= static_cast<EdgeId>(edges_.size()))
      throw ParseError(tag + ": unknown edge " + std::to_string(s.anchor.edge));
    if (!(s.anchor.offset >= 0.0) || s.anchor.offset > edge(s.anchor.edge).length)
      throw ParseError(tag + ": offset outside anchor edge");
    if (s.plugs < 1) throw ParseError(tag + ": plugs must be >= 1");
    if (!(s.power_kw > 0.0)) throw ParseError(tag + ": power_kw must be positive");
  }

  out_begin_.assign(nodes_.size() + 1, 0);
  for (const auto& e : edges_) ++out_begin_[static_cast<std::size_t>(e.from) + 1];
  for (std::size_t i = 1; i < out_begin_.size(); ++i) out_begin_[i] += out_begin_[i - 1];
  out_edges_.resize(edges_.size());
  std::vector<std::size_t> fill(out_begin_.begin(), out_begin_.end() - 1);
  for (const auto& e : edges_) out_edges_[fill[static_cast<std::size_t>(e.from)]++] = e.id;

  auto fwd = unreachable_nodes(nodes_.size(), edges_, false);
  auto rev = unreachable_nodes(nodes_.size(), edges_, true);
  std::vector<NodeId> bad;
  std::set_union(fwd.begin(), fwd.end(), rev.begin(), rev.end(), std::back_inserter(bad));
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "network is not strongly connected; unreachable node ids:";
    for (NodeId id : bad) msg << ' ' << id;
    throw ValidationError(msg.str());
  }

  if (min_station_dist_ > 0.0) {
    for (std::size_t i = 0; i < stations_.size(); ++i) {
      for (std::size_t j = i + 1; j < stations_.size(); ++j) {
        auto d = point_distance(*this, stations_[i].anchor, stations_[j].anchor);
        if (d && *d < min_station_dist_) {
          std::ostringstream msg;
          msg << "stations " << i << " and " << j << " are " << *d
              << " m apart, below the minimum " << min_station_dist_ << " m";
          throw ValidationError(msg.str());
        }
      }
    }
  }
}

std::span<const EdgeId> RoadNetwork::outgoing(NodeId id) const {
  auto i = static_cast<std::size_t>(id);
  return std::span<const EdgeId>(out_edges_).subspan(out_begin_[i], out_begin_[i + 1] - out_begin_[i]);
}

bool RoadNetwork::valid_position(Position pos) const {
  if (pos.edge < 0 || pos.edge >= static_cast<EdgeId>(edges_.size())) return false;
  return pos.offset >= 0.0 && pos.offset <= edge(pos.edge).length;
}

std::vector<double> RoadNetwork::free_flow_weights() const {
  std::vector<double> w(edges_.size());
  for (const auto& e : edges_) w[static_cast<std::size_t>(e.id)] = e.free_flow_time();
  return w;
}

// ---------------------------------------------------------------------------
// Routing

RouteTree::RouteTree(const RoadNetwork& net, Position from, std::span<const double> weights)
    : net_(&net), weights_(weights.begin(), weights.end()), from_(from) {
  EVD_REQUIRE(weights.size() == net.edge_count(), "weights must have one entry per edge");
  EVD_REQUIRE(net.valid_position(from), "route origin is not a valid network position");
  for (double w : weights_)
    EVD_REQUIRE(w > 0.0 && std::isfinite(w), "edge weights must be positive and finite");

  const Edge& cur = net.edge(from.edge);
  rem_length_ = cur.length - from.offset;
  rem_time_ = weights_[static_cast<std::size_t>(from.edge)] * (rem_length_ / cur.length);

  const std::size_t n = net.node_count();
  time_.assign(n, kInf);
  length_.assign(n, kInf);
  pred_.assign(n, -1);
  std::vector<char> settled(n, 0);

  using Entry = std::tuple<double, double, NodeId>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
  const auto start = static_cast<std::size_t>(cur.to);
  time_[start] = rem_time_;
  length_[start] = rem_length_;
  pq.emplace(rem_time_, rem_length_, cur.to);

  while (!pq.empty()) {
    auto [t, l, u] = pq.top();
    pq.pop();
    const auto ui = static_cast<std::size_t>(u);
    if (settled[ui]) continue;
    settled[ui] = 1;
    for (EdgeId eid : net.outgoing(u)) {
      const Edge& e = net.edge(eid);
      const auto vi = static_cast<std::size_t>(e.to);
      if (settled[vi]) continue;
      const double nt = time_[ui] + weights_[static_cast<std::size_t>(eid)];
      const double nl = length_[ui] + e.length;
      bool better = nt < time_[vi] || (nt == time_[vi] && nl < length_[vi]);
      if (!better && nt == time_[vi] && nl == length_[vi]) {
        auto cand = node_sequence(u);
        cand.push_back(eid);
        better = cand < node_sequence(e.to);
      }
      if (better) {
        time_[vi] = nt;
        length_[vi] = nl;
        pred_[vi] = eid;
        pq.emplace(nt, nl, e.to);
      }
    }
  }
}

std::vector<EdgeId> RouteTree::node_sequence(NodeId n) const {
  std::vector<EdgeId> seq;
  const auto start = net_->edge(from_.edge).to;
  while (n != start) {
    EdgeId e = pred_[static_cast<std::size_t>(n)];
    seq.push_back(e);
    n = net_->edge(e).from;
  }
  std::reverse(seq.begin(), seq.end());
  return seq;
}

std::optional<Path> RouteTree::path_to_edge(EdgeId to_edge) const {
  EVD_REQUIRE(to_edge >= 0 && to_edge < static_cast<EdgeId>(net_->edge_count()),
              "unknown target edge " + std::to_string(to_edge));
  if (to_edge == from_.edge) return Path{{}, rem_length_, rem_time_};
  const Edge& e = net_->edge(to_edge);
  if (!node_reached(e.from)) return std::nullopt;
  Path p;
  p.edges = node_sequence(e.from);
  p.edges.push_back(to_edge);
  const auto tail = static_cast<std::size_t>(e.from);
  p.total_length = length_[tail] + e.length;
  p.est_travel_time = time_[tail] + weights_[static_cast<std::size_t>(to_edge)];
  return p;
}

std::optional<PointRoute> RouteTree::route_to_point(Position target) const {
  EVD_REQUIRE(net_->valid_position(target), "route target is not a valid network position");
  if (target.edge == from_.edge && target.offset >= from_.offset) {
    const Edge& e = net_->edge(target.edge);
    const double d = target.offset - from_.offset;
    return PointRoute{{}, target.offset, d, weights_[static_cast<std::size_t>(e.id)] * (d / e.length)};
  }
  const Edge& e = net_->edge(target.edge);
  if (!node_reached(e.from)) return std::nullopt;
  PointRoute r;
  r.edges = node_sequence(e.from);
  r.edges.push_back(target.edge);
  r.arrival_offset = target.offset;
  const auto tail = static_cast<std::size_t>(e.from);
  r.length = length_[tail] + target.offset;
  r.travel_time = time_[tail] + weights_[static_cast<std::size_t>(e.id)] * (target.offset / e.length);
  return r;
}

std::optional<Path> shortest_path(const RoadNetwork& net, EdgeId from_edge, double offset,
                                  EdgeId to_edge, std::span<const double> weights) {
  return RouteTree(net, Position{from_edge, offset}, weights).path_to_edge(to_edge);
}

std::vector<std::optional<double>> station_distances(const RoadNetwork& net, Position pos,
                                                     std::span<const double> weights) {
  RouteTree tree(net, pos, weights);
  std::vector<std::optional<double>> out;
  out.reserve(net.station_count());
  for (const auto& s : net.stations()) {
    auto r = tree.route_to_point(s.anchor);
    out.push_back(r ? std::optional<double>(r->length) : std::nullopt);
  }
  return out;
}

std::optional<double> point_distance(const RoadNetwork& net, Position a, Position b) {
  auto w = net.free_flow_weights();
  auto ab = RouteTree(net, a, w).route_to_point(b);
  auto ba = RouteTree(net, b, w).route_to_point(a);
  if (ab && ba) return std::min(ab->length, ba->length);
  if (ab) return ab->length;
  if (ba) return ba->length;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Generation

RoadNetwork gen_grid(const GridSpec& spec) {
  if (spec.rows < 2 || spec.cols < 2) throw ConfigError("grid needs at least 2 rows and 2 columns");
  if (!(spec.block_len > 0.0)) throw ConfigError("block length must be positive");
  if (spec.n_stations < 1) throw ConfigError("at least one station is required");

  std::vector<Node> nodes;
  for (int r = 0; r < spec.rows; ++r)
    for (int c = 0; c < spec.cols; ++c)
      nodes.push_back(Node{r * spec.cols + c, c * spec.block_len, r * spec.block_len});

  std::vector<Edge> edges;
  auto link = [&](NodeId a, NodeId b) {
    for (auto [u, v] : {std::pair{a, b}, std::pair{b, a}}) {
      edges.push_back(Edge{static_cast<EdgeId>(edges.size()), u, v, spec.block_len, spec.speed,
                           spec.capacity});
    }
  };
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      NodeId u = r * spec.cols + c;
      if (c + 1 < spec.cols) link(u, u + 1);
      if (r + 1 < spec.rows) link(u, u + spec.cols);
    }
  }

  RoadNetwork bare(nodes, edges, {});
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<EdgeId> pick(0, static_cast<EdgeId>(edges.size()) - 1);

  constexpr int kRestarts = 200;
  constexpr int kCandidates = 500;
  for (int restart = 0; restart < kRestarts; ++restart) {
    std::vector<StationSite> placed;
    for (int attempt = 0; attempt < kCandidates && static_cast<int>(placed.size()) < spec.n_stations;
         ++attempt) {
      EdgeId e = pick(rng);
      Position cand{e, spec.block_len / 2.0};
      bool ok = true;
      for (const auto& s : placed) {
        if (s.anchor.edge == e) { ok = false; break; }
        auto d = point_distance(bare, cand, s.anchor);
        if (!d || *d < spec.min_station_dist) { ok = false; break; }
      }
      if (ok) {
        placed.push_back(StationSite{static_cast<StationId>(placed.size()), cand, spec.plugs,
                                     spec.power_kw});
      }
    }
    if (static_cast<int>(placed.size()) == spec.n_stations)
      return RoadNetwork(std::move(nodes), std::move(edges), std::move(placed), spec.min_station_dist);
  }
  std::ostringstream msg;
  msg << "could not place " << spec.n_stations << " stations at least " << spec.min_station_dist
      << " m apart on a " << spec.rows << "x" << spec.cols
      << " grid; use a smaller min_station_dist";
  throw ConfigError(msg.str());
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

template <typename T>
T field(const json& rec, const char* key, const std::string& where) {
  auto it = rec.find(key);
  if (it == rec.end()) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

const json& array_field(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array())
    throw ParseError(std::string("network document needs an array '") + key + "'");
  return *it;
}

}  // namespace

RoadNetwork load_network(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("network document must be an object");
  if (auto f = doc.find("format"); f != doc.end() && *f != kNetworkFormat)
    throw ParseError("unsupported network format " + f->dump());

  std::vector<Node> nodes;
  const json& jn = array_field(doc, "nodes");
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const std::string where = "nodes[" + std::to_string(i) + "]";
    nodes.push_back(Node{field<NodeId>(jn[i], "id", where), field<double>(jn[i], "x", where),
                         field<double>(jn[i], "y", where)});
  }
  std::vector<Edge> edges;
  const json& je = array_field(doc, "edges");
  for (std::size_t i = 0; i < je.size(); ++i) {
    const std::string where = "edges[" + std::to_string(i) + "]";
    edges.push_back(Edge{field<EdgeId>(je[i], "id", where), field<NodeId>(je[i], "from", where),
                         field<NodeId>(je[i], "to", where), field<double>(je[i], "length", where),
                         field<double>(je[i], "speed", where), field<int>(je[i], "capacity", where)});
  }
  std::vector<StationSite> stations;
  const json& js = array_field(doc, "stations");
  for (std::size_t i = 0; i < js.size(); ++i) {
    const std::string where = "stations[" + std::to_string(i) + "]";
    stations.push_back(StationSite{
        field<StationId>(js[i], "id", where),
        Position{field<EdgeId>(js[i], "edge", where), field<double>(js[i], "offset", where)},
        field<int>(js[i], "plugs", where), field<double>(js[i], "power_kw", where)});
  }
  double min_dist = 0.0;
  if (auto f = doc.find("min_station_dist"); f != doc.end()) {
    if (!f->is_number()) throw ParseError("min_station_dist must be a number");
    min_dist = f->get<double>();
  }
  return RoadNetwork(std::move(nodes), std::move(edges), std::move(stations), min_dist);
}

RoadNetwork load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_network(ss.str());
}

std::string save_network(const RoadNetwork& net) {
  json doc;
  doc["format"] = kNetworkFormat;
  doc["min_station_dist"] = net.min_station_dist();
  json nodes = json::array();
  for (const auto& n : net.nodes()) nodes.push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}});
  json edges = json::array();
  for (const auto& e : net.edges())
    edges.push_back({{"id", e.id},
                     {"from", e.from},
                     {"to", e.to},
                     {"length", e.length},
                     {"speed", e.free_flow_speed},
                     {"capacity", e.capacity}});
  json stations = json::array();
  for (const auto& s : net.stations())
    stations.push_back({{"id", s.id},
                        {"edge", s.anchor.edge},
                        {"offset", s.anchor.offset},
                        {"plugs", s.plugs},
                        {"power_kw", s.power_kw}});
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  doc["stations"] = std::move(stations);
  return doc.dump(1) + "\n";
}

void save_network_file(const RoadNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write network file " + path);
  out << save_network(net);
}

}  // namespace evdispatch
