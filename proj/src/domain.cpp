#include "schoolrun/domain.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace schoolrun {

namespace {

int parse_int_field(std::string_view text, std::string_view whole) {
  int value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw Error(ErrorCode::kParseError, "malformed time field in '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

CongestionLevel CongestionLevel::from_int(int level) {
  if (level < kMin || level > kMax) {
    throw Error(ErrorCode::kOutOfRange,
                "congestion level " + std::to_string(level) + " outside 1..4");
  }
  return CongestionLevel(level);
}

RoadCategory parse_road_category(std::string_view name) {
  if (name == "ordinary") return RoadCategory::kOrdinary;
  if (name == "main") return RoadCategory::kMain;
  if (name == "express") return RoadCategory::kExpress;
  throw Error(ErrorCode::kUnknownCategory, "unknown road category '" + std::string(name) + "'");
}

std::string_view to_string(RoadCategory category) {
  switch (category) {
    case RoadCategory::kOrdinary: return "ordinary";
    case RoadCategory::kMain: return "main";
    case RoadCategory::kExpress: return "express";
  }
  return "ordinary";
}

RoadSegment::RoadSegment(std::string id, RoadCategory category, std::vector<Point> polyline)
    : id_(std::move(id)), category_(category), polyline_(std::move(polyline)) {
  if (polyline_.size() < 2) {
    throw Error(ErrorCode::kParseError, "road '" + id_ + "' has fewer than two points");
  }
  length_ = polyline_length(polyline_);
  if (!(length_ > 0.0) || !std::isfinite(length_)) {
    throw Error(ErrorCode::kParseError, "road '" + id_ + "' has non-positive length");
  }
}

double polar_angle_deg(Point location, Point center) {
  double deg = std::atan2(location.y - center.y, location.x - center.x) * 180.0 /
               std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

School::School(std::string id, Point location, const CityFrame& frame)
    : id_(std::move(id)),
      location_(location),
      angle_deg_(polar_angle_deg(location, frame.center)),
      distance_km_(distance(location, frame.center) / 1000.0) {}

Timestamp parse_timestamp(std::string_view text) {
  // YYYY-MM-DD[T ]HH:MM[:SS]
  if (text.size() < 16 || (text[10] != 'T' && text[10] != ' ')) {
    throw Error(ErrorCode::kParseError, "malformed timestamp '" + std::string(text) + "'");
  }
  Timestamp ts;
  ts.day = parse_date(text.substr(0, 10));
  const int hh = parse_int_field(text.substr(11, 2), text);
  if (text[13] != ':') {
    throw Error(ErrorCode::kParseError, "malformed timestamp '" + std::string(text) + "'");
  }
  const int mm = parse_int_field(text.substr(14, 2), text);
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59) {
    throw Error(ErrorCode::kParseError, "time out of range in '" + std::string(text) + "'");
  }
  ts.minute_of_day = hh * 60 + mm;
  return ts;
}

std::string format_timestamp(const Timestamp& ts) {
  return format_date(ts.day) + "T" + format_clock(ts.minute_of_day);
}

std::chrono::sys_days parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw Error(ErrorCode::kParseError, "malformed date '" + std::string(text) + "'");
  }
  const int y = parse_int_field(text.substr(0, 4), text);
  const int m = parse_int_field(text.substr(5, 2), text);
  const int d = parse_int_field(text.substr(8, 2), text);
  const std::chrono::year_month_day ymd{std::chrono::year{y},
                                        std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) {
    throw Error(ErrorCode::kParseError, "invalid calendar date '" + std::string(text) + "'");
  }
  return std::chrono::sys_days{ymd};
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int parse_clock(std::string_view text) {
  if (text.size() != 5 || text[2] != ':') {
    throw Error(ErrorCode::kParseError, "malformed clock time '" + std::string(text) + "'");
  }
  const int hh = parse_int_field(text.substr(0, 2), text);
  const int mm = parse_int_field(text.substr(3, 2), text);
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59) {
    throw Error(ErrorCode::kParseError, "clock time out of range '" + std::string(text) + "'");
  }
  return hh * 60 + mm;
}

std::string format_clock(int minute_of_day) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minute_of_day / 60, minute_of_day % 60);
  return buf;
}

TimeSlot::TimeSlot(Timestamp timestamp, bool work, bool school, bool exam)
    : timestamp_(timestamp), work_(work), school_(school), exam_(exam) {
  if (school_ && !work_) {
    throw Error(ErrorCode::kInvalidArgument, "school-run slot must fall on a workday");
  }
  if (exam_ && school_) {
    throw Error(ErrorCode::kInvalidArgument, "exam slot cannot be a school-run slot");
  }
}

FeatureKind feature_kind(std::size_t index) {
  switch (index) {
    case 0: case 3: case 4: case 5: case 6: case 11: case 12: case 13: case 14:
      return FeatureKind::kDummy;
    case 1:
      return FeatureKind::kAngle;
    default:
      return index >= kFirstShareIndex ? FeatureKind::kShare : FeatureKind::kContinuous;
  }
}

std::optional<std::size_t> feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t require_feature_index(std::string_view name) {
  if (auto idx = feature_index(name)) return *idx;
  throw Error(ErrorCode::kMissingFeature, "unknown feature '" + std::string(name) + "'");
}

std::map<std::string, double> FeatureVector::to_map() const {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) out[std::string(kFeatureNames[i])] = values[i];
  return out;
}

const FeatureVector& validate_feature_vector(const FeatureVector& v) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double x = v.values[i];
    const std::string name(kFeatureNames[i]);
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::kOutOfRange, "feature '" + name + "' is not finite");
    }
    bool ok = true;
    switch (feature_kind(i)) {
      case FeatureKind::kDummy: ok = (x == 0.0 || x == 1.0); break;
      case FeatureKind::kShare: ok = (x >= 0.0 && x <= 1.0); break;
      case FeatureKind::kAngle: ok = (x >= 0.0 && x < 360.0); break;
      case FeatureKind::kContinuous: ok = (i != 2 || x >= 0.0); break;
    }
    if (!ok) {
      throw Error(ErrorCode::kOutOfRange,
                  "feature '" + name + "' value " + std::to_string(x) + " outside its domain");
    }
  }
  return v;
}

FeatureVector validate_feature_vector(const std::map<std::string, double>& entries) {
  for (const auto& [name, value] : entries) {
    if (!feature_index(name)) {
      throw Error(ErrorCode::kInvalidArgument, "unexpected feature '" + name + "'");
    }
  }
  FeatureVector v;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    auto it = entries.find(std::string(kFeatureNames[i]));
    if (it == entries.end()) {
      throw Error(ErrorCode::kMissingFeature,
                  "missing feature '" + std::string(kFeatureNames[i]) + "'");
    }
    v.values[i] = it->second;
  }
  validate_feature_vector(v);
  return v;
}

}  // namespace schoolrun
