#pragma once

// Resource-elastic space-time scheduler. Users are served round-robin at
// the granularity of single run-to-completion requests. Hosted instances
// are reused when possible; a lone user is given the widest variant and
// replicated across free regions, while competing users get the narrowest
// variant. Idle instances may be replaced only between requests.
//
// The scheduler owns the event loop over its fabric: arrivals, fabric
// completions and deferred starts are processed per timestamp, followed by
// one dispatch pass.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fos/config.hpp"
#include "fos/fabric.hpp"
#include "fos/registry.hpp"
#include "fos/scenario.hpp"
#include "fos/trace.hpp"

namespace fos {

enum class JobState { queued, dispatched, complete, cancelled };

struct JobRecord {
  std::int64_t id = -1;
  std::uint64_t ticket = 0;
  std::string user;
  JobRequest request;
  JobState state = JobState::queued;
  std::vector<std::string> regions;
  std::string variant;
  Micros arrive_us = 0;
  Micros dispatch_us = 0;
  Micros reconfig_us = 0;  // zero when an instance was reused
  Micros exec_start_us = 0;
  Micros exec_done_us = 0;
};

struct Ticket {
  std::uint64_t id = 0;
  std::string user;
  std::vector<std::int64_t> jobs;
};

struct DispatchAction {
  enum class Kind { reuse, reconfigure };
  Kind kind = Kind::reuse;
  std::int64_t job = -1;
  std::string user;
  std::vector<std::size_t> regions;
  std::string variant;
};

class Scheduler {
 public:
  Scheduler(Fabric& fabric, const Registry& registry, SchedulerConfig config = {});
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  // Validates every job, then queues them for arrival at `at` (now by default).
  Ticket submit(const std::string& user, const std::vector<JobRequest>& jobs);
  Ticket submit_at(Micros at, const std::string& user, const std::vector<JobRequest>& jobs);

  // One dispatch pass at the current instant. Normally driven by the loop.
  std::vector<DispatchAction> dispatch();

  // Processes the next timestamp that has work; false when nothing is pending.
  bool step();
  void run();
  void run_until(Micros t);
  void run_until_complete(std::uint64_t ticket);
  bool idle() const;
  std::optional<Micros> next_time() const;

  // Drops the user's queued jobs; dispatched ones run to completion.
  std::size_t cancel_queued(const std::string& user);

  bool ticket_complete(std::uint64_t ticket) const;
  const Ticket& ticket(std::uint64_t id) const;
  const JobRecord& job(std::int64_t id) const;
  std::size_t dispatched_count(const std::string& user) const;
  const std::vector<std::string>& ring() const { return ring_; }

  using JobListener = std::function<void(const JobRecord&)>;
  void on_job_complete(JobListener listener) { job_listener_ = std::move(listener); }
  using DispatchObserver = std::function<void(const Scheduler&, const DispatchAction&)>;
  void on_dispatch(DispatchObserver observer) { dispatch_observer_ = std::move(observer); }

  std::vector<ScheduleEvent> trace() const { return fabric_.trace(); }
  Fabric& fabric() { return fabric_; }
  const Fabric& fabric() const { return fabric_; }
  const SchedulerConfig& config() const { return config_; }

 private:
  struct UserQueue {
    std::deque<std::int64_t> queued;
    std::size_t inflight = 0;
    std::size_t dispatched = 0;
  };
  struct Arrival {
    Micros t;
    std::uint64_t seq;
    std::uint64_t ticket;
  };
  struct DeferredStart {
    Micros t;
    DeviceId device;
    std::int64_t job;
  };
  struct Placement {
    DispatchAction::Kind kind;
    std::vector<std::size_t> regions;
    const BitstreamVariant* variant = nullptr;
    DeviceId device = 0;
  };

  void validate(const std::vector<JobRequest>& jobs) const;
  void process_arrivals(Micros t);
  void on_fabric_event(const ScheduleEvent& ev, DeviceId device);
  void program_and_start(DeviceId device, std::int64_t job);
  void process_boundary(Micros t);

  bool region_bound(std::size_t r) const { return bound_[r] >= 0; }
  bool region_blank(std::size_t r) const;
  bool region_available(std::size_t r) const;
  bool instance_idle(DeviceId id) const;
  std::optional<std::vector<std::size_t>> find_run(const BitstreamVariant& v, bool blank_only) const;
  std::optional<Placement> try_variant(const std::string& function, const BitstreamVariant& v,
                                       bool reuse_exact) const;
  std::optional<Placement> choose(const JobRecord& job, bool multi) const;

  Fabric& fabric_;
  const Registry& registry_;
  SchedulerConfig config_;

  std::map<std::string, UserQueue> users_;
  std::vector<std::string> ring_;
  std::optional<std::size_t> last_served_;
  std::map<std::int64_t, JobRecord> jobs_;
  std::map<std::uint64_t, Ticket> tickets_;
  std::vector<Arrival> arrivals_;  // sorted by (t, seq)
  std::vector<DeferredStart> deferred_;
  std::vector<std::int64_t> bound_;  // per region: job occupying it, or -1
  std::map<DeviceId, std::int64_t> device_job_;
  std::map<std::string, std::vector<BitstreamVariant>> variant_cache_;
  std::int64_t next_job_ = 1;
  std::uint64_t next_ticket_ = 1;
  std::uint64_t arrival_seq_ = 0;
  JobListener job_listener_;
  DispatchObserver dispatch_observer_;
};

// Per-job and per-user figures derived from a trace alone.
struct JobStats {
  std::int64_t job = -1;
  std::string user;
  Micros arrive_us = 0;
  Micros queue_us = 0;
  Micros reconfig_us = 0;
  Micros exec_us = 0;
  Micros total_us = 0;
  std::vector<std::string> regions;
};

struct UserStats {
  std::string user;
  std::size_t jobs = 0;
  Micros first_arrive_us = 0;
  Micros last_done_us = 0;
  Micros makespan_us = 0;
};

struct OccupancyInterval {
  std::string region;
  Micros start_us = 0;
  Micros end_us = 0;
  std::string user;
  std::int64_t job = -1;
  std::string activity;  // "reconfig" or "exec"
};

struct RunStats {
  std::vector<JobStats> jobs;  // ordered by job id
  std::vector<UserStats> users;
  std::size_t reconfigurations = 0;
  Micros makespan_us = 0;  // first arrival to last completion
  std::vector<OccupancyInterval> occupancy;
};

// Limits the figures to `jobs` when given. Throws if any of them never completed.
RunStats compute_stats(const std::vector<ScheduleEvent>& trace,
                       const std::set<std::int64_t>* jobs = nullptr);
RunStats ticket_stats(const Scheduler& scheduler, std::uint64_t ticket);

std::string metrics_csv(const RunStats& stats);

struct ScenarioResult {
  std::vector<ScheduleEvent> trace;
  RunStats stats;
};

// Runs a scenario to completion under its own scheduler settings, or under
// `policy` when given.
ScenarioResult run_scenario(const Scenario& scenario, std::optional<Policy> policy = std::nullopt);

}  // namespace fos
