#include "schoolrun/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "json.hpp"
#include "schoolrun/csv.hpp"

namespace schoolrun {

using nlohmann::json;

namespace {

struct CellKey {
  long long cx, cy;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    return std::hash<long long>()(k.cx * 73856093LL ^ k.cy * 19349663LL);
  }
};

// Endpoint snapping on a uniform grid with cells of the tolerance size; a
// match can only live in the 3x3 block around the query cell.
class NodeSnapper {
 public:
  NodeSnapper(double tolerance, std::vector<Point>& nodes)
      : tol_(tolerance > 0.0 ? tolerance : 0.0), cell_(tolerance > 0.0 ? tolerance : 1.0),
        nodes_(nodes) {}

  std::size_t snap(Point p) {
    const CellKey key = key_of(p);
    std::size_t best = std::numeric_limits<std::size_t>::max();
    double best_d = std::numeric_limits<double>::infinity();
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(CellKey{key.cx + dx, key.cy + dy});
        if (it == cells_.end()) continue;
        for (std::size_t n : it->second) {
          const double d = distance(nodes_[n], p);
          if (d <= tol_ && (d < best_d || (d == best_d && n < best))) {
            best = n;
            best_d = d;
          }
        }
      }
    }
    if (best != std::numeric_limits<std::size_t>::max()) return best;
    nodes_.push_back(p);
    cells_[key].push_back(nodes_.size() - 1);
    return nodes_.size() - 1;
  }

 private:
  CellKey key_of(Point p) const {
    return CellKey{static_cast<long long>(std::floor(p.x / cell_)),
                   static_cast<long long>(std::floor(p.y / cell_))};
  }

  double tol_;
  double cell_;
  std::vector<Point>& nodes_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> cells_;
};

}  // namespace

RoadNetwork::RoadNetwork(std::vector<RoadSegment> segments, double snap_tolerance_m)
    : segments_(std::move(segments)) {
  NodeSnapper snapper(snap_tolerance_m, nodes_);
  edges_.reserve(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& poly = segments_[i].polyline();
    const std::size_t a = snapper.snap(poly.front());
    const std::size_t b = snapper.snap(poly.back());
    edges_.push_back(GraphEdge{a, b, segments_[i].length()});
    if (!index_.emplace(segments_[i].id(), i).second) {
      throw Error(ErrorCode::kParseError, "duplicate road id '" + segments_[i].id() + "'");
    }
  }
  adjacency_.assign(nodes_.size(), {});
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    adjacency_[edges_[e].from].emplace_back(edges_[e].to, e);
    if (edges_[e].to != edges_[e].from) adjacency_[edges_[e].to].emplace_back(edges_[e].from, e);
  }

  component_.assign(nodes_.size(), std::numeric_limits<std::size_t>::max());
  for (std::size_t start = 0; start < nodes_.size(); ++start) {
    if (component_[start] != std::numeric_limits<std::size_t>::max()) continue;
    std::vector<std::size_t> stack{start};
    component_[start] = component_count_;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (auto [v, e] : adjacency_[u]) {
        if (component_[v] == std::numeric_limits<std::size_t>::max()) {
          component_[v] = component_count_;
          stack.push_back(v);
        }
      }
    }
    ++component_count_;
  }
}

std::optional<std::size_t> RoadNetwork::find(std::string_view road_id) const {
  auto it = index_.find(std::string(road_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t RoadNetwork::require(std::string_view road_id) const {
  if (auto idx = find(road_id)) return *idx;
  throw Error(ErrorCode::kUnknownRoad, "road '" + std::string(road_id) + "' not in network");
}

RoadNetwork parse_roads_geojson(std::string_view text, double snap_tolerance_m) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("roads GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw Error(ErrorCode::kParseError, "roads GeoJSON must be a FeatureCollection");
  }
  std::vector<RoadSegment> segments;
  segments.reserve(doc["features"].size());
  std::size_t position = 0;
  for (const auto& feature : doc["features"]) {
    const std::string where = "roads GeoJSON feature " + std::to_string(position++);
    if (!feature.contains("geometry") || !feature["geometry"].is_object() ||
        feature["geometry"].value("type", "") != "LineString") {
      throw Error(ErrorCode::kParseError, where + ": geometry must be a LineString");
    }
    const auto& props = feature.value("properties", json::object());
    if (!props.contains("id") || !props.contains("category") || !props["category"].is_string()) {
      throw Error(ErrorCode::kParseError, where + ": properties need id and category");
    }
    std::string id = props["id"].is_string() ? props["id"].get<std::string>() : props["id"].dump();
    const RoadCategory category = parse_road_category(props["category"].get<std::string>());
    std::vector<Point> poly;
    const auto& coords = feature["geometry"]["coordinates"];
    if (!coords.is_array()) throw Error(ErrorCode::kParseError, where + ": missing coordinates");
    for (const auto& c : coords) {
      if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
        throw Error(ErrorCode::kParseError, where + ": malformed coordinate");
      }
      poly.push_back(Point{c[0].get<double>(), c[1].get<double>()});
    }
    segments.emplace_back(std::move(id), category, std::move(poly));
  }
  return RoadNetwork(std::move(segments), snap_tolerance_m);
}

RoadNetwork load_roads(const std::filesystem::path& path, double snap_tolerance_m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_roads_geojson(ss.str(), snap_tolerance_m);
}

std::string roads_to_geojson(const RoadNetwork& network) {
  // Written by hand so coordinates use the round-trip formatter and the output
  // is byte-stable.
  std::string out = "{\"type\":\"FeatureCollection\",\"features\":[\n";
  for (std::size_t i = 0; i < network.segments().size(); ++i) {
    const auto& seg = network.segments()[i];
    out += "{\"type\":\"Feature\",\"properties\":{\"id\":";
    out += json(seg.id()).dump();
    out += ",\"category\":\"";
    out += to_string(seg.category());
    out += "\"},\"geometry\":{\"type\":\"LineString\",\"coordinates\":[";
    for (std::size_t k = 0; k < seg.polyline().size(); ++k) {
      if (k) out += ',';
      out += '[' + csv::format_double(seg.polyline()[k].x) + ',' +
             csv::format_double(seg.polyline()[k].y) + ']';
    }
    out += "]}}";
    out += (i + 1 < network.segments().size()) ? ",\n" : "\n";
  }
  out += "]}\n";
  return out;
}

std::vector<Neighborhood> build_neighborhoods(std::span<const School> schools,
                                              const RoadNetwork& network, double radius_m,
                                              Warnings* warnings) {
  std::vector<BoundingBox> boxes;
  boxes.reserve(network.segments().size());
  for (const auto& seg : network.segments()) boxes.push_back(bounding_box(seg.polyline()));

  std::vector<Neighborhood> out;
  out.reserve(schools.size());
  for (const School& school : schools) {
    Neighborhood nbhd{school.id(), radius_m, {}};
    for (std::size_t r = 0; r < network.segments().size(); ++r) {
      if (boxes[r].distance_to(school.location()) > radius_m) continue;
      if (point_polyline_distance(school.location(), network.segments()[r].polyline()) <=
          radius_m) {
        nbhd.roads.push_back(r);
      }
    }
    if (nbhd.roads.empty() && warnings) {
      warnings->push_back({WarningCode::kEmptyNeighborhood,
                           "school '" + school.id() + "' has no roads within " +
                               csv::format_double(radius_m) + " m"});
    }
    out.push_back(std::move(nbhd));
  }
  return out;
}

std::vector<double> edge_betweenness(const RoadNetwork& network) {
  const std::size_t n = network.nodes().size();
  const auto& adj = network.adjacency();
  const auto& edges = network.edges();
  std::vector<double> bc(edges.size(), 0.0);
  if (n < 2) return bc;

  std::vector<double> dist(n);
  std::vector<double> sigma(n);
  std::vector<double> delta(n);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> preds(n);  // (node, edge)
  std::vector<std::size_t> order;
  order.reserve(n);
  std::vector<char> settled(n);
  using Item = std::pair<double, std::size_t>;

  const auto same = [](double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
  };

  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::fill(settled.begin(), settled.end(), 0);
    for (auto& p : preds) p.clear();
    order.clear();

    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[s] = 0.0;
    sigma[s] = 1.0;
    heap.emplace(0.0, s);
    while (!heap.empty()) {
      auto [d, u] = heap.top();
      heap.pop();
      if (settled[u]) continue;
      settled[u] = 1;
      order.push_back(u);
      for (auto [v, e] : adj[u]) {
        if (v == u || settled[v]) continue;
        const double nd = d + edges[e].length;
        if (dist[v] == std::numeric_limits<double>::infinity() ||
            (nd < dist[v] && !same(nd, dist[v]))) {
          dist[v] = nd;
          sigma[v] = sigma[u];
          preds[v].assign(1, {u, e});
          heap.emplace(nd, v);
        } else if (same(nd, dist[v])) {
          sigma[v] += sigma[u];
          preds[v].emplace_back(u, e);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t w = *it;
      for (auto [v, e] : preds[w]) {
        const double c = sigma[v] / sigma[w] * (1.0 + delta[w]);
        bc[e] += c;
        delta[v] += c;
      }
    }
  }
  // Each unordered pair was visited from both ends.
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  for (double& b : bc) b = b / 2.0 / pairs;
  return bc;
}

GraphMetrics graph_metrics(const RoadNetwork& network, std::span<const double> betweenness,
                           const School& school, const Neighborhood& nbhd, Warnings* warnings) {
  GraphMetrics m;
  if (nbhd.roads.empty()) return m;
  double total = 0.0;
  std::vector<std::size_t> seen_components;
  for (std::size_t r : nbhd.roads) {
    total += betweenness[r];
    const std::size_t c = network.component(network.edges()[r].from);
    if (std::find(seen_components.begin(), seen_components.end(), c) == seen_components.end()) {
      seen_components.push_back(c);
    }
  }
  m.mean_betweenness = total / static_cast<double>(nbhd.roads.size());
  for (std::size_t v = 0; v < network.nodes().size(); ++v) {
    if (network.degree(v) >= 3 && distance(network.nodes()[v], school.location()) <= nbhd.radius_m) {
      ++m.intersections;
    }
  }
  if (seen_components.size() > 1 && warnings) {
    warnings->push_back({WarningCode::kDisconnectedNeighborhood,
                         "neighborhood of '" + nbhd.school_id + "' spans " +
                             std::to_string(seen_components.size()) +
                             " components; betweenness uses reachable pairs only"});
  }
  return m;
}

}  // namespace schoolrun
