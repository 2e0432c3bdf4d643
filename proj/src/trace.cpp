#include "fos/trace.hpp"

#include <algorithm>
#include <array>
#include <ostream>
#include <tuple>

#include "json.hpp"

namespace fos {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {
    "reconfig_start", "reconfig_done", "exec_start",   "exec_done",    "adaptor_attach",
    "decouple",       "job_arrive",    "job_complete", "start_dropped",
};

}  // namespace

std::string_view kind_name(EventKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<EventKind> kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

int kind_rank(EventKind kind) {
  switch (kind) {
    case EventKind::job_arrive: return 0;
    case EventKind::exec_done: return 1;
    case EventKind::job_complete: return 2;
    case EventKind::decouple: return 3;
    case EventKind::reconfig_done: return 4;
    case EventKind::adaptor_attach: return 5;
    case EventKind::reconfig_start: return 6;
    case EventKind::exec_start: return 7;
    case EventKind::start_dropped: return 8;
  }
  return 9;
}

bool trace_order(const ScheduleEvent& a, const ScheduleEvent& b) {
  return std::make_tuple(a.t_us, kind_rank(a.kind), a.first_region, a.job) <
         std::make_tuple(b.t_us, kind_rank(b.kind), b.first_region, b.job);
}

void sort_trace(std::vector<ScheduleEvent>& events) {
  std::stable_sort(events.begin(), events.end(), trace_order);
}

std::string to_json_line(const ScheduleEvent& ev) {
  nlohmann::ordered_json j;
  j["t_us"] = ev.t_us;
  j["kind"] = kind_name(ev.kind);
  j["regions"] = ev.regions;
  j["user"] = ev.user.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(ev.user);
  j["job"] = ev.job < 0 ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(ev.job);
  j["variant"] =
      ev.variant.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(ev.variant);
  return j.dump();
}

std::string to_jsonl(const std::vector<ScheduleEvent>& events) {
  std::string out;
  for (const auto& ev : events) {
    out += to_json_line(ev);
    out += '\n';
  }
  return out;
}

void write_jsonl(std::ostream& out, const std::vector<ScheduleEvent>& events) {
  out << to_jsonl(events);
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    auto nl = text.find('\n');
    if (nl == std::string_view::npos) {
      lines.push_back(text);
      break;
    }
    lines.push_back(text.substr(0, nl));
    text.remove_prefix(nl + 1);
  }
  return lines;
}

}  // namespace

TraceDiff diff_jsonl(std::string_view a, std::string_view b) {
  auto la = split_lines(a);
  auto lb = split_lines(b);
  std::size_t n = std::max(la.size(), lb.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::string_view x = i < la.size() ? la[i] : std::string_view{};
    std::string_view y = i < lb.size() ? lb[i] : std::string_view{};
    if (i >= la.size() || i >= lb.size() || x != y) {
      return TraceDiff{false, i + 1, std::string(x), std::string(y)};
    }
  }
  return {};
}

}  // namespace fos
