#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "schoolrun/domain.hpp"

namespace schoolrun {

inline constexpr double kDefaultSnapToleranceM = 0.5;
inline constexpr double kDefaultNeighborhoodRadiusM = 500.0;

// Edge i of the graph is segment i of the network.
struct GraphEdge {
  std::size_t from;
  std::size_t to;
  double length;
};

class RoadNetwork {
 public:
  // Endpoints closer than snap_tolerance_m (inclusive) share a node. Nodes sit
  // at the first endpoint that created them, in segment order.
  RoadNetwork() = default;
  RoadNetwork(std::vector<RoadSegment> segments, double snap_tolerance_m = kDefaultSnapToleranceM);

  const std::vector<RoadSegment>& segments() const noexcept { return segments_; }
  const std::vector<Point>& nodes() const noexcept { return nodes_; }
  const std::vector<GraphEdge>& edges() const noexcept { return edges_; }
  // (neighbor node, edge index) pairs.
  const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& adjacency() const noexcept {
    return adjacency_;
  }
  std::size_t degree(std::size_t node) const { return adjacency_[node].size(); }
  std::size_t component(std::size_t node) const { return component_[node]; }
  std::size_t component_count() const noexcept { return component_count_; }

  std::optional<std::size_t> find(std::string_view road_id) const;
  // Throws UnknownRoad.
  std::size_t require(std::string_view road_id) const;

 private:
  std::vector<RoadSegment> segments_;
  std::vector<Point> nodes_;
  std::vector<GraphEdge> edges_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency_;
  std::vector<std::size_t> component_;
  std::size_t component_count_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

// GeoJSON FeatureCollection of LineStrings with properties {id, category}.
RoadNetwork parse_roads_geojson(std::string_view text,
                                double snap_tolerance_m = kDefaultSnapToleranceM);
RoadNetwork load_roads(const std::filesystem::path& path,
                       double snap_tolerance_m = kDefaultSnapToleranceM);
std::string roads_to_geojson(const RoadNetwork& network);

// A road belongs to a school's neighborhood iff its minimum point-to-polyline
// distance from the school is <= radius_m. Empty neighborhoods are kept and
// reported as warnings.
std::vector<Neighborhood> build_neighborhoods(std::span<const School> schools,
                                              const RoadNetwork& network,
                                              double radius_m = kDefaultNeighborhoodRadiusM,
                                              Warnings* warnings = nullptr);

// Length-weighted edge betweenness over the whole network: for every edge, the
// sum over unordered node pairs of the fraction of shortest paths using it,
// divided by the number of unordered pairs.
std::vector<double> edge_betweenness(const RoadNetwork& network);

struct GraphMetrics {
  double mean_betweenness = 0.0;
  int intersections = 0;
};

// Averages precomputed betweenness over member edges and counts nodes of
// degree >= 3 within the buffer. Members spread over several components
// produce a DisconnectedNeighborhood warning.
GraphMetrics graph_metrics(const RoadNetwork& network, std::span<const double> betweenness,
                           const School& school, const Neighborhood& nbhd,
                           Warnings* warnings = nullptr);

}  // namespace schoolrun
