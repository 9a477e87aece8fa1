#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "schoolrun/error.hpp"
#include "schoolrun/geometry.hpp"

namespace schoolrun {

// Ordinal road state: 1 smooth, 2 slow, 3 congested, 4 severely congested.
class CongestionLevel {
 public:
  static constexpr int kMin = 1;
  static constexpr int kMax = 4;
  // Levels at or above this count as "congested" for frequencies and shares.
  static constexpr int kCongestedCutoff = 3;

  static CongestionLevel from_int(int level);

  constexpr int value() const noexcept { return value_; }
  constexpr bool congested() const noexcept { return value_ >= kCongestedCutoff; }

  friend constexpr auto operator<=>(CongestionLevel, CongestionLevel) = default;

 private:
  explicit constexpr CongestionLevel(int v) : value_(v) {}
  int value_;
};

enum class RoadCategory : std::uint8_t { kOrdinary = 0, kMain = 1, kExpress = 2 };

inline constexpr std::array<RoadCategory, 3> kRoadCategories = {
    RoadCategory::kOrdinary, RoadCategory::kMain, RoadCategory::kExpress};

RoadCategory parse_road_category(std::string_view name);
std::string_view to_string(RoadCategory category);

class RoadSegment {
 public:
  // Throws ParseError when the polyline has fewer than two points or zero length.
  RoadSegment(std::string id, RoadCategory category, std::vector<Point> polyline);

  const std::string& id() const noexcept { return id_; }
  RoadCategory category() const noexcept { return category_; }
  const std::vector<Point>& polyline() const noexcept { return polyline_; }
  double length() const noexcept { return length_; }

 private:
  std::string id_;
  RoadCategory category_;
  std::vector<Point> polyline_;
  double length_;
};

// Reference frame for the polar school covariates. The default center is a
// placeholder origin; real cities configure their own.
struct CityFrame {
  Point center{0.0, 0.0};
};

class School {
 public:
  School(std::string id, Point location, const CityFrame& frame);

  const std::string& id() const noexcept { return id_; }
  Point location() const noexcept { return location_; }
  // Counterclockwise from due east, wrapped into [0, 360).
  double angle_deg() const noexcept { return angle_deg_; }
  double distance_km() const noexcept { return distance_km_; }

 private:
  std::string id_;
  Point location_;
  double angle_deg_;
  double distance_km_;
};

double polar_angle_deg(Point location, Point center);

// Local civil time at minute resolution.
struct Timestamp {
  std::chrono::sys_days day;
  int minute_of_day = 0;

  std::chrono::year_month_day date() const { return std::chrono::year_month_day{day}; }
  std::chrono::weekday weekday() const { return std::chrono::weekday{day}; }

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

// Accepts "YYYY-MM-DDTHH:MM" with optional ":SS" (seconds ignored) or a space
// separator.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(const Timestamp& ts);
std::chrono::sys_days parse_date(std::string_view text);
std::string format_date(std::chrono::sys_days day);
// "HH:MM" -> minutes after midnight.
int parse_clock(std::string_view text);
std::string format_clock(int minute_of_day);

class TimeSlot {
 public:
  // Throws InvalidArgument when school=1 without work=1 or exam=1 with school=1.
  TimeSlot(Timestamp timestamp, bool work, bool school, bool exam);

  const Timestamp& timestamp() const noexcept { return timestamp_; }
  bool work() const noexcept { return work_; }
  bool school() const noexcept { return school_; }
  bool exam() const noexcept { return exam_; }

  friend bool operator==(const TimeSlot&, const TimeSlot&) = default;

 private:
  Timestamp timestamp_;
  bool work_;
  bool school_;
  bool exam_;
};

// Road reference is the dense index of the segment in its RoadNetwork.
struct CongestionObservation {
  std::uint32_t road;
  TimeSlot slot;
  CongestionLevel level;
};

struct Neighborhood {
  std::string school_id;
  double radius_m = 500.0;
  std::vector<std::size_t> roads;  // sorted road indices
};

// ---- Model 2 covariates -------------------------------------------------

inline constexpr std::size_t kFeatureCount = 25;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "school_mix",   "angle",           "distance",     "population",
    "bus_stop",     "subway",          "parking_lot",  "betweeness",
    "integration",  "choice",          "intersecton",  "building_age",
    "building_height", "building_mix", "landuse_mix",  "UFB",
    "UPL",          "BR",              "HR",           "FBH",
    "RH",           "DBH",             "SPH",          "ECH",
    "BRH"};

// Index of the first scenescape share; shares occupy the last ten slots.
inline constexpr std::size_t kFirstShareIndex = 15;
inline constexpr std::size_t kScenescapeCount = 10;

enum class FeatureKind { kDummy, kContinuous, kAngle, kShare };

FeatureKind feature_kind(std::size_t index);
std::optional<std::size_t> feature_index(std::string_view name);
std::size_t require_feature_index(std::string_view name);

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::string_view name) { return values[require_feature_index(name)]; }
  double operator[](std::string_view name) const {
    return values[require_feature_index(name)];
  }

  std::map<std::string, double> to_map() const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Raw (pre-normalization) checks: every feature present, dummies in {0,1},
// shares in [0,1], angle in [0,360), distance >= 0, everything finite.
FeatureVector validate_feature_vector(const std::map<std::string, double>& entries);
const FeatureVector& validate_feature_vector(const FeatureVector& v);

}  // namespace schoolrun
