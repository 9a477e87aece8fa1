#include "schoolrun/calendar.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace schoolrun {

using nlohmann::json;
using std::chrono::sys_days;

namespace {

bool contains_day(const std::vector<sys_days>& days, sys_days d) {
  return std::find(days.begin(), days.end(), d) != days.end();
}

json range_json(const ClockRange& r) {
  return json{{"start", format_clock(r.start)}, {"end", format_clock(r.end)}};
}

ClockRange range_from(const json& j, const char* what) {
  if (!j.is_object() || !j.contains("start") || !j.contains("end")) {
    throw Error(ErrorCode::kInvalidCalendar, std::string("calendar: ") + what + " needs start/end");
  }
  ClockRange r{parse_clock(j["start"].get<std::string>()), parse_clock(j["end"].get<std::string>())};
  if (r.end < r.start) {
    throw Error(ErrorCode::kInvalidCalendar, std::string("calendar: ") + what + " ends before it starts");
  }
  return r;
}

std::vector<sys_days> days_from(const json& j, const char* key) {
  std::vector<sys_days> out;
  if (!j.contains(key)) return out;
  for (const auto& d : j[key]) out.push_back(parse_date(d.get<std::string>()));
  return out;
}

}  // namespace

bool CalendarConfig::is_school_run_day(sys_days day) const {
  return contains_day(school_run_days, day);
}

bool CalendarConfig::is_weekend(sys_days day) const { return contains_day(weekend_days, day); }

bool CalendarConfig::in_exam_window(const Timestamp& ts) const {
  for (const auto& w : exam_windows) {
    if (w.day == ts.day && w.hours.contains(ts.minute_of_day)) return true;
  }
  return false;
}

void CalendarConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidCalendar, "calendar: " + msg); };
  if (study_end < study_start) fail("study window ends before it starts");
  auto in_window = [&](sys_days d) { return d >= study_start && d <= study_end; };
  for (auto d : school_run_days) {
    if (!in_window(d)) fail("school-run day " + format_date(d) + " outside study window");
    if (is_weekend(d)) fail("school-run day " + format_date(d) + " is a weekend day");
  }
  for (auto d : weekend_days) {
    if (!in_window(d)) fail("weekend day " + format_date(d) + " outside study window");
  }
  for (const auto& w : exam_windows) {
    if (!in_window(w.day)) fail("exam window on " + format_date(w.day) + " outside study window");
    if (is_school_run_day(w.day)) fail("exam window on school-run day " + format_date(w.day));
    if (w.hours.end < w.hours.start) fail("exam window on " + format_date(w.day) + " is inverted");
  }
  const ClockRange morning{parse_clock("06:30"), parse_clock("10:30")};
  const ClockRange noon{parse_clock("12:30"), parse_clock("12:30")};
  const ClockRange afternoon{parse_clock("16:30"), parse_clock("18:30")};
  for (int m : observed_slots) {
    if (!morning.contains(m) && !noon.contains(m) && !afternoon.contains(m)) {
      fail("observed slot " + format_clock(m) + " outside the morning/noon/afternoon windows");
    }
  }
}

std::vector<Timestamp> CalendarConfig::observed_timestamps() const {
  std::vector<int> slots = observed_slots;
  std::sort(slots.begin(), slots.end());
  std::vector<Timestamp> out;
  for (sys_days d = study_start; d <= study_end; d += std::chrono::days{1}) {
    for (int m : slots) out.push_back(Timestamp{d, m});
  }
  return out;
}

CalendarConfig CalendarConfig::study_week_2023() {
  CalendarConfig c;
  c.study_start = parse_date("2023-06-05");
  c.study_end = parse_date("2023-06-11");
  c.school_run_days = {parse_date("2023-06-05"), parse_date("2023-06-06")};
  c.weekend_days = {parse_date("2023-06-10"), parse_date("2023-06-11")};
  const ClockRange exam_am{parse_clock("09:00"), parse_clock("11:30")};
  const ClockRange exam_pm{parse_clock("15:00"), parse_clock("17:00")};
  c.exam_windows = {
      {parse_date("2023-06-07"), exam_am}, {parse_date("2023-06-07"), exam_pm},
      {parse_date("2023-06-08"), exam_pm},
      {parse_date("2023-06-09"), exam_am}, {parse_date("2023-06-09"), exam_pm},
  };
  c.school_hours_am = {parse_clock("07:30"), parse_clock("08:30")};
  c.school_hours_pm = {parse_clock("16:30"), parse_clock("17:30")};
  for (const char* s : {"06:30", "07:30", "08:30", "09:30", "10:30", "12:30", "16:30", "17:30", "18:30"}) {
    c.observed_slots.push_back(parse_clock(s));
  }
  return c;
}

std::string CalendarConfig::to_json() const {
  json j;
  j["study_start"] = format_date(study_start);
  j["study_end"] = format_date(study_end);
  j["school_run_days"] = json::array();
  for (auto d : school_run_days) j["school_run_days"].push_back(format_date(d));
  j["weekend_days"] = json::array();
  for (auto d : weekend_days) j["weekend_days"].push_back(format_date(d));
  j["exam_windows"] = json::array();
  for (const auto& w : exam_windows) {
    json wj = range_json(w.hours);
    wj["date"] = format_date(w.day);
    j["exam_windows"].push_back(wj);
  }
  j["school_hours_am"] = range_json(school_hours_am);
  j["school_hours_pm"] = range_json(school_hours_pm);
  j["observed_slots"] = json::array();
  for (int m : observed_slots) j["observed_slots"].push_back(format_clock(m));
  return j.dump(2) + "\n";
}

CalendarConfig CalendarConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("calendar: ") + e.what());
  }
  CalendarConfig c;
  try {
    c.study_start = parse_date(j.at("study_start").get<std::string>());
    c.study_end = parse_date(j.at("study_end").get<std::string>());
    c.school_run_days = days_from(j, "school_run_days");
    c.weekend_days = days_from(j, "weekend_days");
    if (j.contains("exam_windows")) {
      for (const auto& w : j["exam_windows"]) {
        c.exam_windows.push_back({parse_date(w.at("date").get<std::string>()), range_from(w, "exam window")});
      }
    }
    c.school_hours_am = range_from(j.at("school_hours_am"), "school_hours_am");
    c.school_hours_pm = range_from(j.at("school_hours_pm"), "school_hours_pm");
    for (const auto& s : j.at("observed_slots")) c.observed_slots.push_back(parse_clock(s.get<std::string>()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidCalendar, std::string("calendar: ") + e.what());
  }
  c.validate();
  return c;
}

CalendarConfig CalendarConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

TimeSlot label_timeslot(const Timestamp& ts, const CalendarConfig& cfg) {
  if (ts.day < cfg.study_start || ts.day > cfg.study_end) {
    throw Error(ErrorCode::kOutsideStudyWindow,
                "timestamp " + format_timestamp(ts) + " outside study window " +
                    format_date(cfg.study_start) + ".." + format_date(cfg.study_end));
  }
  const bool work = !cfg.is_weekend(ts.day);
  const bool school = cfg.is_school_run_day(ts.day) && cfg.in_school_hours(ts.minute_of_day);
  const bool exam = !school && cfg.in_exam_window(ts);
  return TimeSlot(ts, work, school, exam);
}

}  // namespace schoolrun
