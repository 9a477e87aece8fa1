#include "schoolrun/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "schoolrun/csv.hpp"

namespace schoolrun {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write '" + path.string() + "'");
  return out;
}

int as_count(std::string_view field, const std::string& ctx) {
  const long long v = csv::to_int(field, ctx);
  if (v < 0) throw Error(ErrorCode::kOutOfRange, ctx + ": negative count");
  return static_cast<int>(v);
}

}  // namespace

std::vector<School> load_schools(const std::filesystem::path& path, const CityFrame& frame) {
  const csv::Table t = csv::read(path);
  const std::size_t id = t.column("id"), x = t.column("x"), y = t.column("y");
  std::vector<School> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    const std::string ctx = path.filename().string() + " school " + row[id];
    out.emplace_back(row[id], Point{csv::to_double(row[x], ctx), csv::to_double(row[y], ctx)}, frame);
  }
  return out;
}

ObservationSet::ObservationSet(std::vector<CongestionObservation> observations,
                               std::size_t road_count)
    : observations_(std::move(observations)), by_road_(road_count) {
  for (std::size_t i = 0; i < observations_.size(); ++i) {
    const std::size_t road = observations_[i].road;
    if (road >= road_count) {
      throw Error(ErrorCode::kUnknownRoad, "observation references road index " +
                                               std::to_string(road) + " outside the network");
    }
    by_road_[road].push_back(i);
  }
}

ObservationSet load_observations(const std::filesystem::path& path, const RoadNetwork& network,
                                 const CalendarConfig& calendar) {
  std::vector<CongestionObservation> obs;
  std::size_t c_road = 0, c_ts = 0, c_level = 0;
  std::unordered_map<std::string, TimeSlot> slot_cache;
  const std::string file = path.filename().string();
  csv::for_each_row(
      path,
      [&](const std::vector<std::string>& header) {
        csv::Table t;
        t.header = header;
        t.source = path.string();
        c_road = t.column("road_id");
        c_ts = t.column("timestamp");
        c_level = t.column("level");
      },
      [&](std::size_t line, const std::vector<std::string_view>& f) {
        const std::string ctx = file + " line " + std::to_string(line);
        const std::size_t road = network.require(f[c_road]);
        std::string ts_text(f[c_ts]);
        auto it = slot_cache.find(ts_text);
        if (it == slot_cache.end()) {
          it = slot_cache.emplace(ts_text, label_timeslot(parse_timestamp(ts_text), calendar)).first;
        }
        const auto level = CongestionLevel::from_int(static_cast<int>(csv::to_int(f[c_level], ctx)));
        obs.push_back(CongestionObservation{static_cast<std::uint32_t>(road), it->second, level});
      });
  return ObservationSet(std::move(obs), network.segments().size());
}

bool school_run_slot(const TimeSlot& slot) { return slot.school(); }

double congestion_frequency(const ObservationSet& observations, const Neighborhood& nbhd,
                            const SlotFilter& filter) {
  double sum = 0.0;
  std::size_t roads = 0;
  for (std::size_t r : nbhd.roads) {
    std::size_t matched = 0, congested = 0;
    for (std::size_t i : observations.for_road(r)) {
      const auto& o = observations.all()[i];
      if (!filter(o.slot)) continue;
      ++matched;
      if (o.level.congested()) ++congested;
    }
    if (matched == 0) continue;
    sum += static_cast<double>(congested) / static_cast<double>(matched);
    ++roads;
  }
  if (roads == 0) {
    throw Error(ErrorCode::kNoObservations,
                "no matching observations in the neighborhood of '" + nbhd.school_id + "'");
  }
  return sum / static_cast<double>(roads);
}

std::vector<ShareRow> congested_road_share(const ObservationSet& observations,
                                           const RoadNetwork& network,
                                           std::span<const Neighborhood> neighborhoods,
                                           std::span<const ShareGroup> required_groups) {
  std::vector<char> has_school(network.segments().size(), 0);
  for (const auto& n : neighborhoods) {
    for (std::size_t r : n.roads) has_school[r] = 1;
  }
  // The share is over (road, slot) readings.
  using Key = std::tuple<Timestamp, int, int>;
  std::map<Key, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& o : observations.all()) {
    const Key key{o.slot.timestamp(), static_cast<int>(network.segments()[o.road].category()),
                  has_school[o.road]};
    auto& [n, c] = tally[key];
    ++n;
    if (o.level.congested()) ++c;
  }
  if (tally.empty()) throw Error(ErrorCode::kEmptyGroup, "no observations to group");
  for (const auto& g : required_groups) {
    const bool present = std::any_of(tally.begin(), tally.end(), [&](const auto& kv) {
      return std::get<1>(kv.first) == static_cast<int>(g.category) &&
             std::get<2>(kv.first) == static_cast<int>(g.has_school);
    });
    if (!present) {
      throw Error(ErrorCode::kEmptyGroup, "group (" + std::string(to_string(g.category)) + ", " +
                                              (g.has_school ? "school" : "no school") +
                                              ") has no observations");
    }
  }
  std::vector<ShareRow> out;
  out.reserve(tally.size());
  for (const auto& [key, counts] : tally) {
    ShareRow row;
    row.timestamp = std::get<0>(key);
    row.group = ShareGroup{static_cast<RoadCategory>(std::get<1>(key)), std::get<2>(key) != 0};
    row.roads = counts.first;
    row.congested = counts.second;
    row.percent = 100.0 * static_cast<double>(counts.second) / static_cast<double>(counts.first);
    out.push_back(row);
  }
  return out;
}

FeatureVector derive_table1_features(const School& school, const Table1Inputs& in) {
  auto missing = [&](const char* layer) {
    return Error(ErrorCode::kMissingLayer,
                 std::string("layer '") + layer + "' missing for school '" + school.id() + "'");
  };
  if (!in.poi) throw missing("poi");
  if (!in.buildings) throw missing("buildings");
  if (!in.landuse) throw missing("landuse");
  if (!in.signaling_count) throw missing("population");
  if (!in.graph) throw missing("graph_metrics");
  if (!in.syntax) throw missing("syntax");

  FeatureVector v;
  v["school_mix"] = in.poi->other_schools >= 1 ? 1.0 : 0.0;
  v["angle"] = school.angle_deg();
  v["distance"] = school.distance_km();
  v["population"] = *in.signaling_count > 10000.0 ? 1.0 : 0.0;
  v["bus_stop"] = in.poi->bus_stops > 5 ? 1.0 : 0.0;
  v["subway"] = in.poi->subway_stations >= 1 ? 1.0 : 0.0;
  v["parking_lot"] = in.poi->parking_lots > 50 ? 1.0 : 0.0;
  v["betweeness"] = in.graph->mean_betweenness;
  v["integration"] = in.syntax->integration;
  v["choice"] = in.syntax->choice;
  v["intersecton"] = static_cast<double>(in.graph->intersections);

  const BuildingStats& b = *in.buildings;
  // Percent differences are compared in integer arithmetic so the thresholds
  // are exact at 10% and 30%.
  const long long total = b.buildings;
  v["building_age"] =
      total > 0 && 10LL * std::llabs(static_cast<long long>(b.old_buildings) - b.new_buildings) < total
          ? 1.0 : 0.0;
  v["building_height"] = b.mean_stories > 6.0 ? 1.0 : 0.0;
  v["building_mix"] =
      total > 0 && 10LL * std::llabs(static_cast<long long>(b.high_buildings) - b.low_buildings) < 3 * total
          ? 1.0 : 0.0;
  const auto present = std::count_if(in.landuse->area.begin(), in.landuse->area.end(),
                                     [](double a) { return a > 0.0; });
  v["landuse_mix"] = present == 5 ? 1.0 : 0.0;
  return v;
}

FeatureLayers FeatureLayers::load(const std::filesystem::path& dir) {
  FeatureLayers layers;
  {
    const auto t = csv::read(dir / "poi.csv");
    const auto id = t.column("school_id"), s = t.column("schools"), bus = t.column("bus_stop"),
               sub = t.column("subway"), park = t.column("parking_lot");
    for (const auto& r : t.rows) {
      const std::string ctx = "poi.csv " + r[id];
      layers.poi[r[id]] = PoiCounts{as_count(r[s], ctx), as_count(r[bus], ctx),
                                    as_count(r[sub], ctx), as_count(r[park], ctx)};
    }
  }
  {
    const auto t = csv::read(dir / "buildings.csv");
    const auto id = t.column("school_id"), n = t.column("n_buildings"), o = t.column("n_old"),
               nw = t.column("n_new"), h = t.column("n_high"), l = t.column("n_low"),
               ms = t.column("mean_stories");
    for (const auto& r : t.rows) {
      const std::string ctx = "buildings.csv " + r[id];
      layers.buildings[r[id]] = BuildingStats{as_count(r[n], ctx), as_count(r[o], ctx),
                                              as_count(r[nw], ctx), as_count(r[h], ctx),
                                              as_count(r[l], ctx), csv::to_double(r[ms], ctx)};
    }
  }
  {
    const auto t = csv::read(dir / "landuse.csv");
    const auto id = t.column("school_id");
    std::array<std::size_t, 5> cols{};
    for (std::size_t k = 0; k < 5; ++k) cols[k] = t.column(LandUse::kCategories[k]);
    for (const auto& r : t.rows) {
      LandUse lu;
      for (std::size_t k = 0; k < 5; ++k) lu.area[k] = csv::to_double(r[cols[k]], "landuse.csv " + r[id]);
      layers.landuse[r[id]] = lu;
    }
  }
  {
    const auto t = csv::read(dir / "population.csv");
    const auto id = t.column("school_id"), c = t.column("signaling_count");
    for (const auto& r : t.rows) layers.signaling[r[id]] = csv::to_double(r[c], "population.csv " + r[id]);
  }
  {
    const auto t = csv::read(dir / "syntax.csv");
    const auto id = t.column("school_id"), i = t.column("integration"), c = t.column("choice");
    for (const auto& r : t.rows) {
      const std::string ctx = "syntax.csv " + r[id];
      layers.syntax[r[id]] = SyntaxInputs{csv::to_double(r[i], ctx), csv::to_double(r[c], ctx)};
    }
  }
  return layers;
}

void FeatureLayers::save(const std::filesystem::path& dir) const {
  // Sorted by school id so files are byte-stable.
  auto sorted_keys = [](const auto& map) {
    std::vector<std::string> keys;
    for (const auto& kv : map) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  using csv::format_double;
  {
    auto out = open_out(dir / "poi.csv");
    out << "school_id,schools,bus_stop,subway,parking_lot\n";
    for (const auto& k : sorted_keys(poi)) {
      const auto& p = poi.at(k);
      out << k << ',' << p.other_schools << ',' << p.bus_stops << ',' << p.subway_stations << ','
          << p.parking_lots << '\n';
    }
  }
  {
    auto out = open_out(dir / "buildings.csv");
    out << "school_id,n_buildings,n_old,n_new,n_high,n_low,mean_stories\n";
    for (const auto& k : sorted_keys(buildings)) {
      const auto& b = buildings.at(k);
      out << k << ',' << b.buildings << ',' << b.old_buildings << ',' << b.new_buildings << ','
          << b.high_buildings << ',' << b.low_buildings << ',' << format_double(b.mean_stories)
          << '\n';
    }
  }
  {
    auto out = open_out(dir / "landuse.csv");
    out << "school_id";
    for (const char* c : LandUse::kCategories) out << ',' << c;
    out << '\n';
    for (const auto& k : sorted_keys(landuse)) {
      out << k;
      for (double a : landuse.at(k).area) out << ',' << format_double(a);
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "population.csv");
    out << "school_id,signaling_count\n";
    for (const auto& k : sorted_keys(signaling)) out << k << ',' << format_double(signaling.at(k)) << '\n';
  }
  {
    auto out = open_out(dir / "syntax.csv");
    out << "school_id,integration,choice\n";
    for (const auto& k : sorted_keys(syntax)) {
      out << k << ',' << format_double(syntax.at(k).integration) << ','
          << format_double(syntax.at(k).choice) << '\n';
    }
  }
}

Table1Inputs FeatureLayers::inputs_for(const std::string& school_id) const {
  Table1Inputs in;
  if (auto it = poi.find(school_id); it != poi.end()) in.poi = it->second;
  if (auto it = buildings.find(school_id); it != buildings.end()) in.buildings = it->second;
  if (auto it = landuse.find(school_id); it != landuse.end()) in.landuse = it->second;
  if (auto it = signaling.find(school_id); it != signaling.end()) in.signaling_count = it->second;
  if (auto it = syntax.find(school_id); it != syntax.end()) in.syntax = it->second;
  return in;
}

Eigen::VectorXd ZScoreStats::apply(const Eigen::VectorXd& raw) const {
  Eigen::VectorXd z(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) z[i] = (raw[i] - mean[i]) / stddev[i];
  return z;
}

Eigen::VectorXd ZScoreStats::invert(const Eigen::VectorXd& z) const {
  Eigen::VectorXd raw(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) raw[i] = z[i] * stddev[i] + mean[i];
  return raw;
}

ZScoreResult zscore(const Eigen::MatrixXd& columns, std::span<const std::string> names) {
  ZScoreResult r;
  r.z.resize(columns.rows(), columns.cols());
  r.stats.names.assign(names.begin(), names.end());
  const double n = static_cast<double>(columns.rows());
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    const std::string name = j < static_cast<Eigen::Index>(names.size())
                                 ? names[static_cast<std::size_t>(j)]
                                 : "column " + std::to_string(j);
    const double mean = columns.col(j).sum() / n;
    const double var = (columns.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      throw Error(ErrorCode::kConstantColumn, "column '" + name + "' is constant");
    }
    r.z.col(j) = (columns.col(j).array() - mean) / sd;
    r.stats.mean.push_back(mean);
    r.stats.stddev.push_back(sd);
  }
  return r;
}

Eigen::MatrixXd NeighborhoodPanel::feature_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].features.values[j];
    }
  }
  return m;
}

Eigen::VectorXd NeighborhoodPanel::jam_vector() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = rows[i].jam;
  return y;
}

std::optional<std::size_t> NeighborhoodPanel::find(const std::string& school_id) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].school_id == school_id) return i;
  }
  return std::nullopt;
}

void NeighborhoodPanel::save(const std::filesystem::path& path) const {
  auto out = open_out(path);
  out << "school_id,jam";
  for (auto name : kFeatureNames) out << ',' << name;
  out << '\n';
  for (const auto& row : rows) {
    out << row.school_id << ',' << csv::format_double(row.jam);
    for (double v : row.features.values) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

NeighborhoodPanel NeighborhoodPanel::load(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto id = t.column("school_id"), jam = t.column("jam");
  std::array<std::size_t, kFeatureCount> cols{};
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    if (!t.has_column(kFeatureNames[j])) {
      throw Error(ErrorCode::kMissingFeature, "'" + path.string() + "' lacks feature column '" +
                                                  std::string(kFeatureNames[j]) + "'");
    }
    cols[j] = t.column(kFeatureNames[j]);
  }
  NeighborhoodPanel panel;
  for (const auto& r : t.rows) {
    PanelRow row;
    row.school_id = r[id];
    const std::string ctx = path.filename().string() + " " + r[id];
    row.jam = csv::to_double(r[jam], ctx);
    if (row.jam < 0.0 || row.jam > 1.0) throw Error(ErrorCode::kOutOfRange, ctx + ": jam outside [0,1]");
    for (std::size_t j = 0; j < kFeatureCount; ++j) row.features.values[j] = csv::to_double(r[cols[j]], ctx);
    validate_feature_vector(row.features);
    panel.rows.push_back(std::move(row));
  }
  return panel;
}

}  // namespace schoolrun
