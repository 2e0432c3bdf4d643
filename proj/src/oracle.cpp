#include "fos/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace fos {

namespace {

enum { kBlank = 0, kReconf = 1, kHosting = 2 };
enum { kDoneReconf = 0, kDoneExec = 1, kDoneAdaptor = 2 };
enum { kQueued = 0, kRunning = 1, kFinished = 2 };
constexpr int kStream = 1;
constexpr Micros kNever = std::numeric_limits<Micros>::max();

struct Inst {
  int fn = -1;
  int var = -1;
  int first = 0;
  int span = 0;
  bool alive = true;
  bool configured = false;
  bool running = false;
  std::string user;
  std::int64_t job = -1;
};

struct Pending {
  Micros t;
  int rank;
  int region;
  std::uint64_t seq;
  int what;
  int inst;
};

struct Job {
  std::int64_t id;
  int user;
  int fn;
  int state = kQueued;
};

struct Timeline {
  const Scenario& sc;
  int n = 0;
  std::vector<int> reg_state, reg_inst, reg_adaptor, reg_bound;
  std::vector<bool> reg_pending;
  std::vector<Inst> insts;
  std::vector<Pending> pending;
  std::vector<std::pair<Micros, std::pair<int, std::int64_t>>> deferred;  // t, (inst, job)
  std::vector<Job> jobs;
  std::vector<std::string> user_names;       // ring order
  std::vector<std::vector<std::int64_t>> user_queue;
  std::vector<int> user_inflight;
  int last_served = -1;
  std::vector<std::vector<int>> wide, narrow;  // per function, variant indices
  std::vector<ScheduleEvent> log;
  Micros now = 0, port = 0;
  std::uint64_t seq = 0;

  explicit Timeline(const Scenario& s) : sc(s) {}

  const BitstreamVariant& variant(int fn, int var) const {
    return sc.accelerators[fn].bitfiles[var];
  }

  std::string region_name(int r) const { return sc.shell.regions[r].name; }

  ScheduleEvent inst_event(EventKind kind, const Inst& in, Micros t) const {
    ScheduleEvent ev;
    ev.t_us = t;
    ev.kind = kind;
    for (int r = in.first; r < in.first + in.span; ++r) ev.regions.push_back(region_name(r));
    ev.first_region = in.first;
    ev.user = in.user;
    ev.job = in.job;
    ev.variant = variant(in.fn, in.var).name;
    return ev;
  }

  void push(Micros t, EventKind kind, int region, int what, int inst) {
    pending.push_back({t, kind_rank(kind), region, seq++, what, inst});
  }

  bool has_pending_at(Micros t) const {
    for (const auto& p : pending) {
      if (p.t == t) return true;
    }
    return false;
  }

  Micros latency_at_start(const Inst& in) const {
    const LatencyModel& m = variant(in.fn, in.var).latency;
    unsigned users = 0;
    for (const auto& other : insts) {
      if (other.alive && other.running && variant(other.fn, other.var).latency.bytes_moved > 0) {
        ++users;
      }
    }
    if (m.bytes_moved > 0) ++users;
    double compute =
        m.compute_us / (static_cast<double>(in.span) *
                        std::pow(m.speedup_per_extra_slot, static_cast<double>(in.span - 1)));
    double memory = 0.0;
    if (m.bytes_moved > 0) {
      double u = std::max(1u, users);
      double bw = std::min(sc.fabric.bandwidth_per_port_MBs, sc.fabric.bandwidth_total_MBs / u);
      memory = m.bytes_moved / bw;
    }
    return static_cast<Micros>(std::llround(compute + memory));
  }

  void start(int id, std::int64_t job) {
    Inst& in = insts[id];
    in.user = user_names[jobs[job - 1].user];
    in.job = job;
    Micros lat = latency_at_start(in);
    in.running = true;
    log.push_back(inst_event(EventKind::exec_start, in, now));
    push(now + lat, EventKind::exec_done, in.first, kDoneExec, id);
  }

  void fire(const Pending& p) {
    if (p.what == kDoneAdaptor) {
      reg_pending[p.region] = false;
      reg_state[p.region] = kBlank;
      ScheduleEvent ev;
      ev.t_us = now;
      ev.kind = EventKind::adaptor_attach;
      ev.regions = {region_name(p.region)};
      ev.first_region = p.region;
      ev.variant = reg_adaptor[p.region] == kStream ? "adaptor:stream-dma" : "adaptor:mm-widening";
      log.push_back(ev);
      return;
    }
    Inst& in = insts[p.inst];
    if (p.what == kDoneReconf) {
      in.configured = true;
      for (int r = in.first; r < in.first + in.span; ++r) reg_state[r] = kHosting;
      log.push_back(inst_event(EventKind::reconfig_done, in, now));
      start(p.inst, in.job);
      return;
    }
    in.running = false;
    log.push_back(inst_event(EventKind::exec_done, in, now));
    for (int r = in.first; r < in.first + in.span; ++r) reg_bound[r] = -1;
    Job& j = jobs[in.job - 1];
    j.state = kFinished;
    user_inflight[j.user] -= 1;
    ScheduleEvent done = inst_event(EventKind::job_complete, in, now);
    log.push_back(done);
  }

  bool inst_idle(int id) const {
    const Inst& in = insts[id];
    if (!in.alive || !in.configured || in.running) return false;
    for (int r = in.first; r < in.first + in.span; ++r) {
      if (reg_bound[r] >= 0) return false;
    }
    return true;
  }

  bool free_blank(int r) const {
    return reg_bound[r] < 0 && !reg_pending[r] && reg_state[r] == kBlank;
  }

  bool free_or_idle(int r) const {
    if (reg_bound[r] >= 0 || reg_pending[r]) return false;
    if (reg_state[r] == kBlank) return true;
    return reg_state[r] == kHosting && reg_inst[r] >= 0 && !insts[reg_inst[r]].running;
  }

  bool iface_ok(int first, int span, Interface iface) const {
    if (iface == Interface::axi_stream_32) return reg_adaptor[first] == kStream;
    for (int r = first; r < first + span; ++r) {
      if (reg_adaptor[r] == kStream) return false;
    }
    return true;
  }

  int scan_run(int fn, int var, bool blank) const {
    const BitstreamVariant& v = variant(fn, var);
    int span = static_cast<int>(v.span());
    for (int first = 0; first + span <= n; ++first) {
      bool ok = true;
      for (int r = first; r < first + span; ++r) ok = ok && (blank ? free_blank(r) : free_or_idle(r));
      if (ok && iface_ok(first, span, v.interface)) return first;
    }
    return -1;
  }

  int idle_exact(int fn, int var) const {
    int best = -1;
    for (int i = 0; i < static_cast<int>(insts.size()); ++i) {
      if (insts[i].fn != fn || variant(fn, insts[i].var).name != variant(fn, var).name) continue;
      if (!inst_idle(i)) continue;
      if (best < 0 || insts[i].first < insts[best].first) best = i;
    }
    return best;
  }

  // Outcome: reuse instance (>=0, -1) or reconfigure (-1, var) at `first`.
  struct Choice {
    int inst = -1;
    int var = -1;
    int first = -1;
    bool found() const { return inst >= 0 || var >= 0; }
  };

  Choice with_variant(int fn, int var, bool exact_reuse) const {
    Choice c;
    if (exact_reuse) {
      c.inst = idle_exact(fn, var);
      if (c.inst >= 0) return c;
    }
    for (bool blank : {true, false}) {
      int first = scan_run(fn, var, blank);
      if (first >= 0) return {-1, var, first};
    }
    return {};
  }

  Choice pick(int fn, bool multi) const {
    if (sc.scheduler.policy == Policy::fixed) {
      for (int var : wide[fn]) {
        if (variant(fn, var).span() == 1) return with_variant(fn, var, true);
      }
      return {};
    }
    if (multi && sc.scheduler.multi_user_variant == VariantRule::smallest) {
      int best = -1;
      for (int i = 0; i < static_cast<int>(insts.size()); ++i) {
        if (insts[i].fn != fn || !inst_idle(i)) continue;
        if (best < 0 || insts[i].span < insts[best].span ||
            (insts[i].span == insts[best].span && insts[i].first < insts[best].first)) {
          best = i;
        }
      }
      if (best >= 0) return {best, -1, -1};
      for (int var : narrow[fn]) {
        Choice c = with_variant(fn, var, false);
        if (c.found()) return c;
      }
      return {};
    }
    for (int var : wide[fn]) {
      Choice c = with_variant(fn, var, true);
      if (c.found()) return c;
    }
    return {};
  }

  void apply(const Choice& c, Job& j) {
    Micros begin = now + sc.scheduler.decision_overhead_us;
    if (c.inst >= 0) {
      Inst& in = insts[c.inst];
      for (int r = in.first; r < in.first + in.span; ++r) reg_bound[r] = static_cast<int>(j.id);
      if (sc.scheduler.decision_overhead_us == 0) {
        start(c.inst, j.id);
      } else {
        deferred.push_back({begin, {c.inst, j.id}});
      }
      return;
    }
    int span = static_cast<int>(variant(j.fn, c.var).span());
    for (int r = c.first; r < c.first + span; ++r) {
      int victim = reg_inst[r];
      if (victim < 0) continue;
      Inst& v = insts[victim];
      for (int q = v.first; q < v.first + v.span; ++q) {
        reg_state[q] = kBlank;
        reg_inst[q] = -1;
      }
      v.alive = false;
    }
    Inst in;
    in.fn = j.fn;
    in.var = c.var;
    in.first = c.first;
    in.span = span;
    in.user = user_names[j.user];
    in.job = j.id;
    int id = static_cast<int>(insts.size());
    for (int r = c.first; r < c.first + span; ++r) {
      reg_state[r] = kReconf;
      reg_inst[r] = id;
      reg_bound[r] = static_cast<int>(j.id);
    }
    Micros t0 = std::max({now, begin, port});
    port = t0 + sc.fabric.reconfig_us_per_region * span;
    insts.push_back(in);
    log.push_back(inst_event(EventKind::reconfig_start, insts[id], t0));
    push(port, EventKind::reconfig_done, c.first, kDoneReconf, id);
  }

  void dispatch() {
    int users = static_cast<int>(user_names.size());
    if (users == 0) return;
    int active = 0;
    for (int u = 0; u < users; ++u) {
      if (!user_queue[u].empty() || user_inflight[u] > 0) ++active;
    }
    bool multi = active >= 2;
    bool progress = true;
    while (progress) {
      progress = false;
      int from = last_served < 0 ? 0 : (last_served + 1) % users;
      for (int k = 0; k < users; ++k) {
        int u = (from + k) % users;
        if (user_queue[u].empty()) continue;
        if (sc.scheduler.policy == Policy::fixed && user_inflight[u] > 0) continue;
        Job& j = jobs[user_queue[u].front() - 1];
        Choice c = pick(j.fn, multi);
        if (!c.found()) continue;
        user_queue[u].erase(user_queue[u].begin());
        user_inflight[u] += 1;
        j.state = kRunning;
        last_served = u;
        progress = true;
        apply(c, j);
      }
    }
  }
};

int function_index(const Scenario& sc, const std::string& name) {
  for (std::size_t i = 0; i < sc.accelerators.size(); ++i) {
    if (sc.accelerators[i].name == name) return static_cast<int>(i);
  }
  throw Error(Errc::unknown_name, "scenario has no accelerator " + name);
}

}  // namespace

bool within_oracle_limits(const Scenario& scenario, const OracleLimits& limits) {
  std::set<std::string> users;
  for (const auto& s : scenario.submissions) users.insert(s.user);
  return scenario.shell.regions.size() <= limits.max_regions && users.size() <= limits.max_users &&
         job_count(scenario) <= limits.max_jobs;
}

std::vector<ScheduleEvent> oracle_timeline(const Scenario& sc, const OracleLimits& limits) {
  if (!within_oracle_limits(sc, limits)) {
    throw Error(Errc::out_of_range, "scenario " + sc.name + " exceeds the oracle bounds");
  }
  Timeline tl(sc);
  tl.n = static_cast<int>(sc.shell.regions.size());
  tl.reg_state.assign(tl.n, kBlank);
  tl.reg_inst.assign(tl.n, -1);
  tl.reg_adaptor.assign(tl.n, -1);
  tl.reg_bound.assign(tl.n, -1);
  tl.reg_pending.assign(tl.n, false);
  for (const auto& a : sc.accelerators) {
    std::vector<int> idx;
    for (std::size_t v = 0; v < a.bitfiles.size(); ++v) {
      if (a.bitfiles[v].shell == sc.shell.name) idx.push_back(static_cast<int>(v));
    }
    std::vector<int> w = idx, s = idx;
    std::stable_sort(w.begin(), w.end(), [&](int x, int y) {
      return a.bitfiles[x].span() > a.bitfiles[y].span();
    });
    std::stable_sort(s.begin(), s.end(), [&](int x, int y) {
      return a.bitfiles[x].span() < a.bitfiles[y].span();
    });
    tl.wide.push_back(w);
    tl.narrow.push_back(s);
  }

  tl.now = sc.fabric.shell_load_us;
  tl.port = tl.now;
  for (const auto& a : sc.adaptors) {
    int r = -1;
    for (int i = 0; i < tl.n; ++i) {
      if (sc.shell.regions[i].name == a.region) r = i;
    }
    if (r < 0) throw Error(Errc::unknown_name, "unknown region " + a.region);
    tl.reg_adaptor[r] = a.kind == "stream-dma" ? kStream : 0;
    tl.reg_pending[r] = true;
    tl.reg_state[r] = kReconf;
    Micros t0 = std::max(tl.now, tl.port);
    tl.port = t0 + sc.fabric.reconfig_us_per_region;
    ScheduleEvent ev;
    ev.t_us = t0;
    ev.kind = EventKind::reconfig_start;
    ev.regions = {a.region};
    ev.first_region = r;
    ev.variant = "adaptor:" + a.kind;
    tl.log.push_back(ev);
    tl.push(tl.port, EventKind::adaptor_attach, r, kDoneAdaptor, -1);
  }

  struct Arrival {
    Micros t;
    std::vector<std::int64_t> ids;
  };
  std::vector<Arrival> arrivals;
  Micros ready = tl.now;
  std::vector<std::string> submitters;
  for (const auto& s : sc.submissions) {
    Arrival a{ready + std::max<Micros>(s.at_us, 0), {}};
    if (std::find(submitters.begin(), submitters.end(), s.user) == submitters.end()) {
      submitters.push_back(s.user);
    }
    for (const auto& req : s.jobs) {
      Job j;
      j.id = static_cast<std::int64_t>(tl.jobs.size()) + 1;
      j.user = -1;
      j.fn = function_index(sc, req.accname);
      tl.jobs.push_back(j);
      a.ids.push_back(j.id);
    }
    arrivals.push_back(a);
  }
  std::vector<int> job_user(tl.jobs.size() + 1, -1);
  {
    std::size_t k = 0;
    for (const auto& s : sc.submissions) {
      for (std::size_t i = 0; i < s.jobs.size(); ++i, ++k) {
        (void)i;
        job_user[k + 1] = static_cast<int>(
            std::find(submitters.begin(), submitters.end(), s.user) - submitters.begin());
      }
    }
  }
  std::vector<bool> arrived(arrivals.size(), false);
  // Ring position follows first arrival, not first submission.
  std::vector<int> ring_of(submitters.size(), -1);

  for (;;) {
    Micros T = kNever;
    for (std::size_t a = 0; a < arrivals.size(); ++a) {
      if (!arrived[a]) T = std::min(T, arrivals[a].t);
    }
    for (const auto& p : tl.pending) T = std::min(T, p.t);
    for (const auto& d : tl.deferred) T = std::min(T, d.first);
    if (T == kNever) break;
    tl.now = T;

    // Arrivals at T, earliest-submitted first; ties broken by arrival time then index.
    std::vector<std::size_t> order;
    for (std::size_t a = 0; a < arrivals.size(); ++a) {
      if (!arrived[a] && arrivals[a].t == T) order.push_back(a);
    }
    for (std::size_t a : order) {
      arrived[a] = true;
      for (std::int64_t id : arrivals[a].ids) {
        int sub = job_user[id];
        if (ring_of[sub] < 0) {
          ring_of[sub] = static_cast<int>(tl.user_names.size());
          tl.user_names.push_back(submitters[sub]);
          tl.user_queue.emplace_back();
          tl.user_inflight.push_back(0);
        }
        Job& j = tl.jobs[id - 1];
        j.user = ring_of[sub];
        tl.user_queue[j.user].push_back(id);
        ScheduleEvent ev;
        ev.t_us = T;
        ev.kind = EventKind::job_arrive;
        ev.user = submitters[sub];
        ev.job = id;
        tl.log.push_back(ev);
      }
    }

    for (;;) {
      while (tl.has_pending_at(T)) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < tl.pending.size(); ++i) {
          const Pending& x = tl.pending[i];
          const Pending& y = tl.pending[best];
          if (std::tie(x.t, x.rank, x.region, x.seq) < std::tie(y.t, y.rank, y.region, y.seq)) {
            best = i;
          }
        }
        Pending p = tl.pending[best];
        tl.pending.erase(tl.pending.begin() + static_cast<std::ptrdiff_t>(best));
        tl.fire(p);
      }
      std::vector<std::pair<int, std::int64_t>> due;
      for (std::size_t i = 0; i < tl.deferred.size();) {
        if (tl.deferred[i].first == T) {
          due.push_back(tl.deferred[i].second);
          tl.deferred.erase(tl.deferred.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
          ++i;
        }
      }
      for (const auto& [inst, job] : due) tl.start(inst, job);
      tl.dispatch();
      bool again = tl.has_pending_at(T);
      for (const auto& d : tl.deferred) again = again || d.first == T;
      if (!again) break;
    }
  }

  sort_trace(tl.log);
  return tl.log;
}

}  // namespace fos
