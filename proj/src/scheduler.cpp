#include "fos/scheduler.hpp"

#include <algorithm>
#include <sstream>

namespace fos {

Scheduler::Scheduler(Fabric& fabric, const Registry& registry, SchedulerConfig config)
    : fabric_(fabric), registry_(registry), config_(config) {
  if (config_.decision_overhead_us < 0) {
    throw Error(Errc::invalid, "decision overhead must be non-negative");
  }
  bound_.assign(fabric_.region_count(), -1);
  fabric_.set_listener([this](const ScheduleEvent& ev, DeviceId id) { on_fabric_event(ev, id); });
}

void Scheduler::validate(const std::vector<JobRequest>& jobs) const {
  for (const auto& job : jobs) {
    const AcceleratorDescriptor& accel = registry_.lookup(job.accname);
    for (const auto& [name, value] : job.params) {
      const RegisterEntry* reg = accel.registers.find(name);
      if (!reg || reg->name == kControlRegister) {
        throw Error(Errc::unknown_name,
                    "unknown parameter \"" + name + "\" for accelerator " + job.accname);
      }
    }
    auto variants = registry_.variants_for(job.accname, fabric_.shell().name);
    bool feasible = std::any_of(variants.begin(), variants.end(), [&](const BitstreamVariant& v) {
      return v.span() <= fabric_.region_count();
    });
    if (!feasible) {
      throw Error(Errc::no_capacity,
                  "no variant of " + job.accname + " fits shell " + fabric_.shell().name);
    }
    if (config_.policy == Policy::fixed &&
        std::none_of(variants.begin(), variants.end(),
                     [](const BitstreamVariant& v) { return v.span() == 1; })) {
      throw Error(Errc::invalid, job.accname + " has no 1-slot variant for fixed scheduling");
    }
  }
}

Ticket Scheduler::submit(const std::string& user, const std::vector<JobRequest>& jobs) {
  return submit_at(fabric_.now(), user, jobs);
}

Ticket Scheduler::submit_at(Micros at, const std::string& user,
                            const std::vector<JobRequest>& jobs) {
  if (user.empty()) throw Error(Errc::invalid, "user id must not be empty");
  validate(jobs);
  Ticket t;
  t.id = next_ticket_++;
  t.user = user;
  for (const auto& request : jobs) {
    JobRecord rec;
    rec.id = next_job_++;
    rec.ticket = t.id;
    rec.user = user;
    rec.request = request;
    t.jobs.push_back(rec.id);
    jobs_.emplace(rec.id, std::move(rec));
  }
  tickets_.emplace(t.id, t);
  Arrival a{std::max(at, fabric_.now()), arrival_seq_++, t.id};
  auto pos = std::upper_bound(arrivals_.begin(), arrivals_.end(), a,
                              [](const Arrival& x, const Arrival& y) {
                                return std::tie(x.t, x.seq) < std::tie(y.t, y.seq);
                              });
  arrivals_.insert(pos, a);
  return t;
}

void Scheduler::process_arrivals(Micros t) {
  while (!arrivals_.empty() && arrivals_.front().t <= t) {
    Arrival a = arrivals_.front();
    arrivals_.erase(arrivals_.begin());
    const Ticket& ticket = tickets_.at(a.ticket);
    for (std::int64_t id : ticket.jobs) {
      JobRecord& job = jobs_.at(id);
      if (job.state != JobState::queued) continue;
      if (users_.find(job.user) == users_.end()) ring_.push_back(job.user);
      users_[job.user].queued.push_back(id);
      job.arrive_us = t;
      ScheduleEvent ev;
      ev.t_us = t;
      ev.kind = EventKind::job_arrive;
      ev.user = job.user;
      ev.job = id;
      fabric_.record(std::move(ev));
    }
  }
}

bool Scheduler::region_blank(std::size_t r) const {
  const Region& reg = fabric_.region(r);
  return !region_bound(r) && !reg.adaptor_pending && reg.state == RegionState::blank;
}

bool Scheduler::region_available(std::size_t r) const {
  if (region_bound(r)) return false;
  const Region& reg = fabric_.region(r);
  if (reg.adaptor_pending) return false;
  if (reg.state == RegionState::blank) return true;
  if (reg.state != RegionState::hosting || !reg.device) return false;
  return !fabric_.device(*reg.device).running();
}

bool Scheduler::instance_idle(DeviceId id) const {
  const DeviceInstance& dev = fabric_.device(id);
  if (!dev.configured || dev.running()) return false;
  return std::none_of(dev.regions.begin(), dev.regions.end(),
                      [&](std::size_t r) { return region_bound(r); });
}

std::optional<std::vector<std::size_t>> Scheduler::find_run(const BitstreamVariant& v,
                                                            bool blank_only) const {
  std::size_t span = v.span();
  std::size_t n = fabric_.region_count();
  if (span == 0 || span > n) return std::nullopt;
  for (std::size_t first = 0; first + span <= n; ++first) {
    std::vector<std::size_t> run;
    bool ok = true;
    for (std::size_t r = first; r < first + span && ok; ++r) {
      ok = blank_only ? region_blank(r) : region_available(r);
      run.push_back(r);
    }
    if (ok && fabric_.interface_compatible(run, v.interface)) return run;
  }
  return std::nullopt;
}

std::optional<Scheduler::Placement> Scheduler::try_variant(const std::string& function,
                                                           const BitstreamVariant& v,
                                                           bool reuse_exact) const {
  if (reuse_exact) {
    std::optional<DeviceId> best;
    std::size_t best_first = 0;
    for (DeviceId id : fabric_.devices()) {
      const DeviceInstance& dev = fabric_.device(id);
      if (dev.function != function || dev.variant.name != v.name || !instance_idle(id)) continue;
      if (!best || dev.regions.front() < best_first) {
        best = id;
        best_first = dev.regions.front();
      }
    }
    if (best) {
      return Placement{DispatchAction::Kind::reuse, fabric_.device(*best).regions, nullptr, *best};
    }
  }
  for (bool blank_only : {true, false}) {
    if (auto run = find_run(v, blank_only)) {
      return Placement{DispatchAction::Kind::reconfigure, *run, &v, 0};
    }
  }
  return std::nullopt;
}

std::optional<Scheduler::Placement> Scheduler::choose(const JobRecord& job, bool multi) const {
  const std::vector<BitstreamVariant>& widest_first = variant_cache_.at(job.request.accname);
  const std::string& function = job.request.accname;

  if (config_.policy == Policy::fixed) {
    for (const auto& v : widest_first) {
      if (v.span() == 1) return try_variant(function, v, true);
    }
    return std::nullopt;
  }

  if (multi && config_.multi_user_variant == VariantRule::smallest) {
    std::optional<DeviceId> best;
    std::pair<std::size_t, std::size_t> best_key{0, 0};
    for (DeviceId id : fabric_.devices()) {
      const DeviceInstance& dev = fabric_.device(id);
      if (dev.function != function || !instance_idle(id)) continue;
      std::pair<std::size_t, std::size_t> key{dev.regions.size(), dev.regions.front()};
      if (!best || key < best_key) {
        best = id;
        best_key = key;
      }
    }
    if (best) {
      return Placement{DispatchAction::Kind::reuse, fabric_.device(*best).regions, nullptr, *best};
    }
    std::vector<const BitstreamVariant*> narrowest_first;
    for (const auto& v : registry_.lookup(function).bitfiles) {
      if (v.shell != fabric_.shell().name) continue;
      auto it = std::find_if(widest_first.begin(), widest_first.end(),
                             [&](const BitstreamVariant& c) { return c.name == v.name; });
      narrowest_first.push_back(&*it);
    }
    std::stable_sort(narrowest_first.begin(), narrowest_first.end(),
                     [](const BitstreamVariant* a, const BitstreamVariant* b) {
                       return a->span() < b->span();
                     });
    for (const BitstreamVariant* v : narrowest_first) {
      if (auto p = try_variant(function, *v, false)) return p;
    }
    return std::nullopt;
  }

  for (const auto& v : widest_first) {
    if (auto p = try_variant(function, v, true)) return p;
  }
  return std::nullopt;
}

void Scheduler::program_and_start(DeviceId device, std::int64_t job_id) {
  JobRecord& job = jobs_.at(job_id);
  fabric_.set_owner(device, {job.user, job.id});
  const DeviceInstance& dev = fabric_.device(device);
  std::uint64_t base = fabric_.region(dev.regions.front()).descriptor.addr;
  for (const auto& [name, value] : job.request.params) {
    const RegisterEntry& reg = dev.registers.at(name);
    fabric_.mmio_write(base + reg.offset, static_cast<std::uint32_t>(value));
    if (reg.width == 64) {
      fabric_.mmio_write(base + reg.offset + 4, static_cast<std::uint32_t>(value >> 32));
    }
  }
  job.exec_start_us = fabric_.now();
  fabric_.mmio_write(base, ctrl::ap_start);
}

void Scheduler::on_fabric_event(const ScheduleEvent& ev, DeviceId device) {
  auto it = device_job_.find(device);
  if (it == device_job_.end()) return;
  std::int64_t job_id = it->second;
  if (ev.kind == EventKind::reconfig_done) {
    program_and_start(device, job_id);
    return;
  }
  if (ev.kind != EventKind::exec_done) return;

  const DeviceInstance& dev = fabric_.device(device);
  fabric_.mmio_read(fabric_.region(dev.regions.front()).descriptor.addr);  // consumes ap_done
  device_job_.erase(it);
  for (std::size_t r : dev.regions) bound_[r] = -1;

  JobRecord& job = jobs_.at(job_id);
  job.state = JobState::complete;
  job.exec_done_us = ev.t_us;
  users_.at(job.user).inflight -= 1;

  ScheduleEvent done;
  done.t_us = ev.t_us;
  done.kind = EventKind::job_complete;
  done.regions = ev.regions;
  done.first_region = ev.first_region;
  done.user = job.user;
  done.job = job.id;
  done.variant = ev.variant;
  fabric_.record(std::move(done));
  if (job_listener_) job_listener_(job);
}

std::vector<DispatchAction> Scheduler::dispatch() {
  std::vector<DispatchAction> actions;
  if (ring_.empty()) return actions;
  std::size_t active = 0;
  for (const auto& [name, q] : users_) {
    if (!q.queued.empty() || q.inflight > 0) ++active;
  }
  bool multi = active >= 2;

  for (bool progressed = true; progressed;) {
    progressed = false;
    std::size_t n = ring_.size();
    std::size_t start = last_served_ ? (*last_served_ + 1) % n : 0;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t idx = (start + k) % n;
      UserQueue& q = users_.at(ring_[idx]);
      if (q.queued.empty()) continue;
      if (config_.policy == Policy::fixed && q.inflight > 0) continue;
      JobRecord& job = jobs_.at(q.queued.front());
      if (variant_cache_.find(job.request.accname) == variant_cache_.end()) {
        variant_cache_.emplace(job.request.accname,
                               registry_.variants_for(job.request.accname, fabric_.shell().name));
      }
      auto placement = choose(job, multi);
      if (!placement) continue;

      q.queued.pop_front();
      q.inflight += 1;
      q.dispatched += 1;
      last_served_ = idx;
      progressed = true;

      Micros begin = fabric_.now() + config_.decision_overhead_us;
      DispatchAction action;
      action.kind = placement->kind;
      action.job = job.id;
      action.user = job.user;
      action.regions = placement->regions;
      job.state = JobState::dispatched;
      job.dispatch_us = fabric_.now();
      job.regions.clear();
      for (std::size_t r : placement->regions) {
        job.regions.push_back(fabric_.region(r).descriptor.name);
        bound_[r] = job.id;
      }

      if (placement->kind == DispatchAction::Kind::reuse) {
        const DeviceInstance& dev = fabric_.device(placement->device);
        job.variant = dev.variant.name;
        job.reconfig_us = 0;
        device_job_[placement->device] = job.id;
        if (config_.decision_overhead_us == 0) {
          program_and_start(placement->device, job.id);
        } else {
          deferred_.push_back({begin, placement->device, job.id});
        }
      } else {
        const BitstreamVariant& v = *placement->variant;
        const AcceleratorDescriptor& accel = registry_.lookup(job.request.accname);
        job.variant = v.name;
        job.reconfig_us = fabric_.config().reconfig_us_per_region * static_cast<Micros>(v.span());
        DeviceId dev = fabric_.reconfigure(placement->regions, accel.name, v, accel.registers,
                                           {job.user, job.id}, begin);
        device_job_[dev] = job.id;
      }
      action.variant = job.variant;
      if (dispatch_observer_) dispatch_observer_(*this, action);
      actions.push_back(std::move(action));
    }
  }
  return actions;
}

std::optional<Micros> Scheduler::next_time() const {
  std::optional<Micros> t = fabric_.next_event_time();
  auto consider = [&](Micros c) {
    if (!t || c < *t) t = c;
  };
  if (!arrivals_.empty()) consider(arrivals_.front().t);
  for (const auto& d : deferred_) consider(d.t);
  return t;
}

void Scheduler::process_boundary(Micros t) {
  fabric_.advance_clock(t);
  process_arrivals(t);
  for (;;) {
    while (fabric_.next_event_time() == t) fabric_.step();
    std::vector<DeferredStart> due;
    for (auto it = deferred_.begin(); it != deferred_.end();) {
      if (it->t == t) {
        due.push_back(*it);
        it = deferred_.erase(it);
      } else {
        ++it;
      }
    }
    for (const auto& d : due) program_and_start(d.device, d.job);
    dispatch();
    bool more = fabric_.next_event_time() == t ||
                std::any_of(deferred_.begin(), deferred_.end(),
                            [&](const DeferredStart& d) { return d.t == t; });
    if (!more) break;
  }
}

bool Scheduler::step() {
  auto t = next_time();
  if (!t) return false;
  process_boundary(*t);
  return true;
}

void Scheduler::run() {
  while (step()) {
  }
}

void Scheduler::run_until(Micros t) {
  for (;;) {
    auto next = next_time();
    if (!next || *next > t) break;
    process_boundary(*next);
  }
  fabric_.advance_clock(t);
}

void Scheduler::run_until_complete(std::uint64_t ticket) {
  while (!ticket_complete(ticket)) {
    if (!step()) {
      throw Error(Errc::no_capacity, "ticket " + std::to_string(ticket) + " cannot complete");
    }
  }
}

bool Scheduler::idle() const { return !next_time().has_value(); }

std::size_t Scheduler::cancel_queued(const std::string& user) {
  std::size_t n = 0;
  for (auto& [id, job] : jobs_) {
    if (job.user == user && job.state == JobState::queued) {
      job.state = JobState::cancelled;
      ++n;
    }
  }
  if (auto it = users_.find(user); it != users_.end()) it->second.queued.clear();
  return n;
}

bool Scheduler::ticket_complete(std::uint64_t id) const {
  const Ticket& t = ticket(id);
  return std::all_of(t.jobs.begin(), t.jobs.end(), [&](std::int64_t j) {
    JobState s = jobs_.at(j).state;
    return s == JobState::complete || s == JobState::cancelled;
  });
}

const Ticket& Scheduler::ticket(std::uint64_t id) const {
  auto it = tickets_.find(id);
  if (it == tickets_.end()) throw Error(Errc::unknown_name, "unknown ticket " + std::to_string(id));
  return it->second;
}

const JobRecord& Scheduler::job(std::int64_t id) const {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw Error(Errc::unknown_name, "unknown job " + std::to_string(id));
  return it->second;
}

std::size_t Scheduler::dispatched_count(const std::string& user) const {
  auto it = users_.find(user);
  return it == users_.end() ? 0 : it->second.dispatched;
}

// ---- statistics ------------------------------------------------------------

RunStats compute_stats(const std::vector<ScheduleEvent>& trace,
                       const std::set<std::int64_t>* jobs) {
  struct Track {
    std::string user;
    std::optional<Micros> arrive, rstart, rdone, xstart, xdone, complete;
    std::vector<std::string> regions;
  };
  std::map<std::int64_t, Track> tracks;
  RunStats stats;
  std::map<std::pair<std::string, std::int64_t>, Micros> open;  // (region, job) -> start

  for (const auto& ev : trace) {
    if (ev.job < 0) continue;
    if (jobs && jobs->count(ev.job) == 0) continue;
    Track& t = tracks[ev.job];
    t.user = ev.user;
    switch (ev.kind) {
      case EventKind::job_arrive: t.arrive = ev.t_us; break;
      case EventKind::reconfig_start:
        t.rstart = ev.t_us;
        ++stats.reconfigurations;
        for (const auto& r : ev.regions) open[{r, ev.job}] = ev.t_us;
        break;
      case EventKind::reconfig_done:
        t.rdone = ev.t_us;
        for (const auto& r : ev.regions) {
          stats.occupancy.push_back({r, open[{r, ev.job}], ev.t_us, ev.user, ev.job, "reconfig"});
        }
        break;
      case EventKind::exec_start:
        t.xstart = ev.t_us;
        t.regions = ev.regions;
        break;
      case EventKind::exec_done:
        t.xdone = ev.t_us;
        for (const auto& r : ev.regions) {
          stats.occupancy.push_back({r, t.xstart.value_or(ev.t_us), ev.t_us, ev.user, ev.job, "exec"});
        }
        break;
      case EventKind::job_complete: t.complete = ev.t_us; break;
      default: break;
    }
  }
  if (jobs) {
    for (std::int64_t id : *jobs) {
      if (tracks.count(id) == 0) throw Error(Errc::invalid, "job " + std::to_string(id) + " never ran");
    }
  }

  std::map<std::string, UserStats> users;
  std::optional<Micros> first, last;
  for (const auto& [id, t] : tracks) {
    if (!t.arrive || !t.complete || !t.xstart || !t.xdone) {
      throw Error(Errc::invalid, "job " + std::to_string(id) + " is incomplete");
    }
    JobStats js;
    js.job = id;
    js.user = t.user;
    js.arrive_us = *t.arrive;
    js.exec_us = *t.xdone - *t.xstart;
    js.reconfig_us = (t.rstart && t.rdone) ? *t.rdone - *t.rstart : 0;
    js.total_us = *t.complete - *t.arrive;
    js.queue_us = js.total_us - js.exec_us - js.reconfig_us;
    js.regions = t.regions;
    stats.jobs.push_back(js);

    UserStats& u = users[t.user];
    if (u.jobs == 0 || *t.arrive < u.first_arrive_us) u.first_arrive_us = *t.arrive;
    if (u.jobs == 0 || *t.complete > u.last_done_us) u.last_done_us = *t.complete;
    u.user = t.user;
    u.jobs += 1;
    if (!first || *t.arrive < *first) first = *t.arrive;
    if (!last || *t.complete > *last) last = *t.complete;
  }
  for (auto& [name, u] : users) {
    u.makespan_us = u.last_done_us - u.first_arrive_us;
    stats.users.push_back(u);
  }
  if (first && last) stats.makespan_us = *last - *first;
  std::stable_sort(stats.occupancy.begin(), stats.occupancy.end(),
                   [](const OccupancyInterval& a, const OccupancyInterval& b) {
                     return std::tie(a.region, a.start_us) < std::tie(b.region, b.start_us);
                   });
  return stats;
}

RunStats ticket_stats(const Scheduler& scheduler, std::uint64_t ticket) {
  if (!scheduler.ticket_complete(ticket)) {
    throw Error(Errc::invalid, "ticket " + std::to_string(ticket) + " is incomplete");
  }
  std::set<std::int64_t> ids;
  for (std::int64_t id : scheduler.ticket(ticket).jobs) {
    if (scheduler.job(id).state == JobState::complete) ids.insert(id);
  }
  return compute_stats(scheduler.trace(), &ids);
}

std::string metrics_csv(const RunStats& stats) {
  std::ostringstream out;
  out << "user,job_id,queue_us,reconfig_us,exec_us,total_us,regions\n";
  for (const auto& j : stats.jobs) {
    out << j.user << ',' << j.job << ',' << j.queue_us << ',' << j.reconfig_us << ','
        << j.exec_us << ',' << j.total_us << ',';
    for (std::size_t i = 0; i < j.regions.size(); ++i) out << (i ? ";" : "") << j.regions[i];
    out << '\n';
  }
  return out.str();
}

ScenarioResult run_scenario(const Scenario& scenario, std::optional<Policy> policy) {
  Registry registry;
  registry.add_shell(scenario.shell);
  for (const auto& a : scenario.accelerators) registry.add(a);
  Fabric fabric = Fabric::load_shell(scenario.shell, scenario.fabric);
  SchedulerConfig config = scenario.scheduler;
  if (policy) config.policy = *policy;
  Scheduler scheduler(fabric, registry, config);
  for (const auto& a : scenario.adaptors) {
    AdaptorKind kind;
    if (a.kind == "stream-dma") kind = AdaptorKind::stream_dma;
    else if (a.kind == "mm-widening") kind = AdaptorKind::mm_widening;
    else throw Error(Errc::invalid, "unknown adaptor kind \"" + a.kind + "\"");
    fabric.attach_bus_adaptor(fabric.region_index(a.region), kind);
  }
  Micros ready = fabric.now();
  for (const auto& sub : scenario.submissions) {
    scheduler.submit_at(ready + sub.at_us, sub.user, sub.jobs);
  }
  scheduler.run();
  ScenarioResult result;
  result.trace = scheduler.trace();
  result.stats = compute_stats(result.trace);
  return result;
}

}  // namespace fos
