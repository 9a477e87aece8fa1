#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "schoolrun/domain.hpp"

namespace schoolrun {

// Inclusive minute-of-day range.
struct ClockRange {
  int start = 0;
  int end = 0;
  bool contains(int minute) const noexcept { return minute >= start && minute <= end; }
};

struct ExamWindow {
  std::chrono::sys_days day;
  ClockRange hours;
};

// The study week. Every rule that turns a timestamp into the work/school/exam
// dummies lives here as data rather than code.
struct CalendarConfig {
  std::chrono::sys_days study_start;
  std::chrono::sys_days study_end;
  std::vector<std::chrono::sys_days> school_run_days;
  std::vector<std::chrono::sys_days> weekend_days;
  std::vector<ExamWindow> exam_windows;
  ClockRange school_hours_am;
  ClockRange school_hours_pm;
  std::vector<int> observed_slots;  // minutes after midnight, each day

  // Throws InvalidCalendar: exam windows on school-run days, school-run days on
  // weekends, days outside the study window, or observed slots outside the
  // morning (06:30-10:30), noon (12:30) and afternoon (16:30-18:30) windows.
  void validate() const;

  bool is_school_run_day(std::chrono::sys_days day) const;
  bool is_weekend(std::chrono::sys_days day) const;
  bool in_school_hours(int minute) const {
    return school_hours_am.contains(minute) || school_hours_pm.contains(minute);
  }
  bool in_exam_window(const Timestamp& ts) const;

  // Every observed slot of every study day, chronologically.
  std::vector<Timestamp> observed_timestamps() const;

  // June 5-11, 2023: Mon/Tue school-run days, Wed-Fri exam days (no exam on
  // Thursday morning), Sat/Sun weekend; nine hourly half-past slots.
  static CalendarConfig study_week_2023();

  std::string to_json() const;
  static CalendarConfig from_json(const std::string& text);
  static CalendarConfig load(const std::filesystem::path& path);
};

// work = 1 on non-weekend days; school = 1 in pick-up/drop-off hours of a
// school-run day; exam = 1 inside an exam window. Throws OutsideStudyWindow.
TimeSlot label_timeslot(const Timestamp& ts, const CalendarConfig& cfg);

}  // namespace schoolrun
