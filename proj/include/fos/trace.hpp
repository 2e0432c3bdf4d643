#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fos/error.hpp"

namespace fos {

enum class EventKind {
  reconfig_start,
  reconfig_done,
  exec_start,
  exec_done,
  adaptor_attach,
  decouple,
  job_arrive,
  job_complete,
  start_dropped,
};

std::string_view kind_name(EventKind kind);
std::optional<EventKind> kind_from_name(std::string_view name);

// Position of a kind among events sharing a timestamp. Causes sort before
// their effects: arrivals and completions are handled before the dispatch
// decisions they enable.
int kind_rank(EventKind kind);

struct ScheduleEvent {
  Micros t_us = 0;
  EventKind kind = EventKind::job_arrive;
  std::vector<std::string> regions;
  std::string user;  // empty when the event has no owner
  std::int64_t job = -1;
  std::string variant;
  int first_region = -1;  // shell index of regions.front(); ordering key, not serialized

  friend bool operator==(const ScheduleEvent&, const ScheduleEvent&) = default;
};

// Total order used for every emitted trace: time, kind rank, region index, job id.
bool trace_order(const ScheduleEvent& a, const ScheduleEvent& b);
void sort_trace(std::vector<ScheduleEvent>& events);

// One JSON object per line with keys t_us, kind, regions, user, job, variant.
std::string to_json_line(const ScheduleEvent& ev);
std::string to_jsonl(const std::vector<ScheduleEvent>& events);
void write_jsonl(std::ostream& out, const std::vector<ScheduleEvent>& events);

struct TraceHeader {
  std::string shell;
  std::string profile;
  std::vector<std::string> regions;
};

struct TraceDiff {
  bool identical = true;
  std::size_t line = 0;  // 1-based line of the first divergence
  std::string left;
  std::string right;
};

TraceDiff diff_jsonl(std::string_view a, std::string_view b);

}  // namespace fos
