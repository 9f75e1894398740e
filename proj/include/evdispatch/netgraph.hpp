#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace evdispatch {

using NodeId = std::int32_t;
using EdgeId = std::int32_t;
using StationId = std::int32_t;

struct Node {
  NodeId id = 0;
  double x = 0.0;  // meters
  double y = 0.0;  // meters

  friend bool operator==(const Node&, const Node&) = default;
};

struct Edge {
  EdgeId id = 0;
  NodeId from = 0;
  NodeId to = 0;
  double length = 0.0;           // meters
  double free_flow_speed = 0.0;  // meters / second
  int capacity = 1;              // vehicles; jam threshold for the congestion model

  double free_flow_time() const { return length / free_flow_speed; }

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// A point on the road network: an edge and the distance already travelled along it.
struct Position {
  EdgeId edge = 0;
  double offset = 0.0;

  friend bool operator==(const Position&, const Position&) = default;
};

/// Charging station placement. Stations sit along streets, so the anchor is an edge point.
struct StationSite {
  StationId id = 0;
  Position anchor;
  int plugs = 1;
  double power_kw = 100.0;

  friend bool operator==(const StationSite&, const StationSite&) = default;
};

/// Directed road graph with charging station anchors.
///
/// Node ids are dense in [0, nodes) and edge ids dense in [0, edges); the
/// vectors are indexed by id. Immutable after construction.
class RoadNetwork {
 public:
  RoadNetwork() = default;

  /// Validates every structural invariant; throws ParseError for dangling or
  /// malformed records and ValidationError for connectivity/spacing failures.
  RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges, std::vector<StationSite> stations,
              double min_station_dist = 0.0);

  std::span<const Node> nodes() const { return nodes_; }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const StationSite> stations() const { return stations_; }
  const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Edge& edge(EdgeId id) const { return edges_[static_cast<std::size_t>(id)]; }
  std::span<const EdgeId> outgoing(NodeId id) const;

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t station_count() const { return stations_.size(); }
  double min_station_dist() const { return min_station_dist_; }

  bool valid_position(Position pos) const;

  /// Per-edge traversal time at free-flow speed.
  std::vector<double> free_flow_weights() const;

  friend bool operator==(const RoadNetwork& a, const RoadNetwork& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.stations_ == b.stations_ &&
           a.min_station_dist_ == b.min_station_dist_;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<StationSite> stations_;
  double min_station_dist_ = 0.0;
  // CSR adjacency
  std::vector<std::size_t> out_begin_;
  std::vector<EdgeId> out_edges_;
};

/// Route from a position on `from_edge` onwards.
///
/// `edges` is the continuation after the current edge and ends with the target
/// edge; it is empty when the target is the current edge. Totals include the
/// remaining part of the current edge.
struct Path {
  std::vector<EdgeId> edges;
  double total_length = 0.0;
  double est_travel_time = 0.0;

  friend bool operator==(const Path&, const Path&) = default;
};

/// Route ending at a point inside the last edge (a station anchor).
struct PointRoute {
  std::vector<EdgeId> edges;  // continuation after the current edge, may be empty
  double arrival_offset = 0.0;
  double length = 0.0;
  double travel_time = 0.0;
};

/// Shortest-time tree rooted at a position. Ties are broken by smaller
/// length, then by the lexicographically smallest edge-id sequence.
class RouteTree {
 public:
  RouteTree(const RoadNetwork& net, Position from, std::span<const double> weights);

  /// Continuation to reach (and traverse) `to_edge`; nullopt when unreachable.
  std::optional<Path> path_to_edge(EdgeId to_edge) const;
  /// Route to a point. A point behind the vehicle on its own edge needs a loop.
  std::optional<PointRoute> route_to_point(Position target) const;

  bool node_reached(NodeId n) const { return time_[static_cast<std::size_t>(n)] < kInf; }

 private:
  static constexpr double kInf = 1e300;
  std::vector<EdgeId> node_sequence(NodeId n) const;

  const RoadNetwork* net_;
  std::vector<double> weights_;
  Position from_;
  double rem_length_ = 0.0;
  double rem_time_ = 0.0;
  std::vector<double> time_;
  std::vector<double> length_;
  std::vector<EdgeId> pred_;
};

/// Minimum-travel-time path from `from_edge` at `offset` to `to_edge`.
/// Weights are full-edge traversal times in seconds and must be positive and finite.
std::optional<Path> shortest_path(const RoadNetwork& net, EdgeId from_edge, double offset,
                                  EdgeId to_edge, std::span<const double> weights);

/// Road length to each station anchor along the shortest-time route; nullopt marks
/// an unreachable station.
std::vector<std::optional<double>> station_distances(const RoadNetwork& net, Position pos,
                                                     std::span<const double> weights);

/// Shorter of the two directed road distances between two points (free flow).
std::optional<double> point_distance(const RoadNetwork& net, Position a, Position b);

struct GridSpec {
  int rows = 8;
  int cols = 8;
  double block_len = 400.0;
  double speed = 40.0 / 3.6;
  int capacity = 3;
  int n_stations = 5;
  double min_station_dist = 1200.0;
  int plugs = 1;
  double power_kw = 100.0;
  std::uint64_t seed = 7;
};

/// Bidirectional grid with stations placed by seeded rejection sampling.
RoadNetwork gen_grid(const GridSpec& spec);

RoadNetwork load_network(std::string_view document);
RoadNetwork load_network_file(const std::string& path);
/// Canonical serialization: sorted keys, records ordered by id.
std::string save_network(const RoadNetwork& net);
void save_network_file(const RoadNetwork& net, const std::string& path);

}  // namespace evdispatch
