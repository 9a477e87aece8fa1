#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "schoolrun/calendar.hpp"
#include "schoolrun/domain.hpp"
#include "schoolrun/network.hpp"

namespace schoolrun {

// ---- Loaders ---------------------------------------------------------------

// CSV header id,x,y (meters).
std::vector<School> load_schools(const std::filesystem::path& path, const CityFrame& frame);

// Observations grouped by road for frequency queries.
class ObservationSet {
 public:
  ObservationSet() = default;
  ObservationSet(std::vector<CongestionObservation> observations, std::size_t road_count);

  const std::vector<CongestionObservation>& all() const noexcept { return observations_; }
  // Positions into all() for one road, in input order.
  const std::vector<std::size_t>& for_road(std::size_t road) const { return by_road_[road]; }
  std::size_t size() const noexcept { return observations_.size(); }

 private:
  std::vector<CongestionObservation> observations_;
  std::vector<std::vector<std::size_t>> by_road_;
};

// CSV header road_id,timestamp,level; every road id must resolve in the
// network and every timestamp must fall in the calendar's study window.
ObservationSet load_observations(const std::filesystem::path& path, const RoadNetwork& network,
                                 const CalendarConfig& calendar);

// ---- Congestion outcomes ---------------------------------------------------

using SlotFilter = std::function<bool(const TimeSlot&)>;

// Slots counted for the Model 2 outcome: school-run hours.
bool school_run_slot(const TimeSlot& slot);

// Per road: share of matching observations with level >= 3; then the
// unweighted mean over roads that have matching observations.
// Throws NoObservations when nothing in the neighborhood matches.
double congestion_frequency(const ObservationSet& observations, const Neighborhood& nbhd,
                            const SlotFilter& filter);

struct ShareGroup {
  RoadCategory category;
  bool has_school;  // road lies in at least one school neighborhood
  friend bool operator==(const ShareGroup&, const ShareGroup&) = default;
};

struct ShareRow {
  Timestamp timestamp;
  ShareGroup group;
  std::size_t roads = 0;
  std::size_t congested = 0;
  double percent = 0.0;
};

// Percent of observed roads at level >= 3 per slot and (category, has_school)
// group, ordered by timestamp then category then has_school. When
// `required_groups` is given, each must have observations or EmptyGroup is
// thrown.
std::vector<ShareRow> congested_road_share(const ObservationSet& observations,
                                           const RoadNetwork& network,
                                           std::span<const Neighborhood> neighborhoods,
                                           std::span<const ShareGroup> required_groups = {});

// ---- Table 1 features ------------------------------------------------------

struct PoiCounts {
  int other_schools = 0;
  int bus_stops = 0;
  int subway_stations = 0;
  int parking_lots = 0;
};

struct BuildingStats {
  int buildings = 0;
  int old_buildings = 0;
  int new_buildings = 0;
  int high_buildings = 0;
  int low_buildings = 0;
  double mean_stories = 0.0;
};

// Areas of the five non-residential land-use categories.
struct LandUse {
  static constexpr std::array<const char*, 5> kCategories = {
      "green", "admin_public", "commercial", "educational", "industrial"};
  std::array<double, 5> area{};
};

struct SyntaxInputs {
  double integration = 0.0;
  double choice = 0.0;
};

// Layers already clipped to one neighborhood buffer. Any absent layer raises
// MissingLayer.
struct Table1Inputs {
  std::optional<PoiCounts> poi;
  std::optional<BuildingStats> buildings;
  std::optional<LandUse> landuse;
  std::optional<double> signaling_count;
  std::optional<GraphMetrics> graph;
  std::optional<SyntaxInputs> syntax;
};

// Fills the physical features (first 15 entries); scenescape shares stay 0.
FeatureVector derive_table1_features(const School& school, const Table1Inputs& inputs);

// All layer CSVs keyed by school id.
struct FeatureLayers {
  std::unordered_map<std::string, PoiCounts> poi;
  std::unordered_map<std::string, BuildingStats> buildings;
  std::unordered_map<std::string, LandUse> landuse;
  std::unordered_map<std::string, double> signaling;
  std::unordered_map<std::string, SyntaxInputs> syntax;

  // Files: poi.csv, buildings.csv, landuse.csv, population.csv, syntax.csv.
  static FeatureLayers load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;
  Table1Inputs inputs_for(const std::string& school_id) const;
};

// ---- Normalization ---------------------------------------------------------

struct ZScoreStats {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation

  Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const;
};

struct ZScoreResult {
  Eigen::MatrixXd z;
  ZScoreStats stats;
};

// Column-wise (x - mean) / std with population std. Throws ConstantColumn.
ZScoreResult zscore(const Eigen::MatrixXd& columns, std::span<const std::string> names);

// ---- Neighborhood panel ----------------------------------------------------

struct PanelRow {
  std::string school_id;
  double jam = 0.0;
  FeatureVector features;
};

struct NeighborhoodPanel {
  std::vector<PanelRow> rows;

  Eigen::MatrixXd feature_matrix() const;
  Eigen::VectorXd jam_vector() const;
  std::optional<std::size_t> find(const std::string& school_id) const;

  // CSV header school_id,jam,<25 feature names>.
  void save(const std::filesystem::path& path) const;
  static NeighborhoodPanel load(const std::filesystem::path& path);
};

}  // namespace schoolrun
