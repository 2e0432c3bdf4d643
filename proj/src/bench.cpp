#include "fos/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <sstream>

#include "fos/oracle.hpp"

namespace fos::bench {

namespace {

const char* const kBoard = "Ultra96_100MHz_2";

ShellDescriptor board_shell(const std::string& name, std::size_t regions) {
  ShellDescriptor s;
  s.name = name;
  s.bitfile = name + ".bin";
  for (std::size_t i = 0; i < regions; ++i) {
    RegionDescriptor r;
    r.name = "pr" + std::to_string(i);
    r.blank = "Blanking_slot_" + std::to_string(i) + ".bin";
    r.bridge = 0xa0010000u + 0x10000u * static_cast<std::uint32_t>(i);
    r.addr = 0xa0000000u + 0x1000u * static_cast<std::uint32_t>(i);
    s.regions.push_back(r);
  }
  return s;
}

AcceleratorDescriptor kernel(const std::string& name, const std::string& shell,
                             std::vector<std::size_t> spans, LatencyModel latency) {
  AcceleratorDescriptor a;
  a.name = name;
  for (std::size_t span : spans) {
    BitstreamVariant v;
    v.name = name + "_" + std::to_string(span) + "slot.bin";
    v.shell = shell;
    for (std::size_t r = 0; r < span; ++r) v.region.push_back("pr" + std::to_string(r));
    v.latency = latency;
    a.bitfiles.push_back(v);
  }
  a.registers = RegisterMap({{"arg", 0x10}});
  return a;
}

Submission batch(const std::string& user, const std::string& acc, int count, Micros at = 0) {
  Submission s;
  s.user = user;
  s.at_us = at;
  s.jobs.assign(static_cast<std::size_t>(count), JobRequest{acc, {}});
  return s;
}

std::string fmt(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

Micros makespan(const Scenario& s) { return run_scenario(s).stats.makespan_us; }

}  // namespace

Scenario scaling_scenario(int jobs, Micros exec_us, bool fixed) {
  Scenario s;
  s.name = "scaling";
  s.shell = board_shell(kBoard, 3);
  s.scheduler.policy = fixed ? Policy::fixed : Policy::elastic;
  s.accelerators.push_back(kernel("kern", kBoard, {1}, {static_cast<double>(exec_us), 0, 1.0}));
  s.submissions.push_back(batch("u1", "kern", jobs));
  return s;
}

Scenario stagnation_scenario(int k, Micros frame_us) {
  Scenario s;
  s.name = "stagnation";
  s.shell = board_shell(kBoard, 3);
  s.accelerators.push_back(
      kernel("frame", kBoard, {1}, {static_cast<double>(frame_us / k), 0, 1.0}));
  s.submissions.push_back(batch("u1", "frame", k));
  return s;
}

Scenario superlinear_scenario(int jobs, Micros exec_us, double factor, bool fixed) {
  Scenario s;
  s.name = "superlinear";
  s.shell = board_shell("Ultra96_2slot", 2);
  s.scheduler.policy = fixed ? Policy::fixed : Policy::elastic;
  s.accelerators.push_back(
      kernel("dct", s.shell.name, {1, 2}, {static_cast<double>(exec_us), 0, factor}));
  s.submissions.push_back(batch("u1", "dct", jobs));
  return s;
}

Scenario reuse_scenario(int requests_per_tenant) {
  Scenario s;
  s.name = "reuse";
  s.shell = board_shell("Ultra96_1slot", 1);
  s.accelerators.push_back(kernel("kern", s.shell.name, {1}, {5000, 0, 1.0}));
  s.submissions.push_back(batch("a", "kern", requests_per_tenant));
  s.submissions.push_back(batch("b", "kern", requests_per_tenant));
  return s;
}

Scenario fairness_scenario(std::uint32_t seed, int jobs_per_user) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> compute(500, 60000);
  std::uniform_int_distribution<int> bytes(0, 3);
  std::uniform_int_distribution<int> overhead(0, 1);
  Scenario s;
  s.name = "fairness";
  s.shell = board_shell(kBoard, 3);
  s.scheduler.decision_overhead_us = overhead(rng) ? 20 : 0;
  for (const char* user : {"a", "b", "c"}) {
    std::string fn = std::string("f") + user;
    double b = bytes(rng) == 0 ? 0.0 : 1e6 * bytes(rng);
    s.accelerators.push_back(kernel(fn, kBoard, {1}, {static_cast<double>(compute(rng)), b, 1.0}));
    s.submissions.push_back(batch(user, fn, jobs_per_user));
  }
  return s;
}

Scenario mix_scenario(int m, int s_count, const MixParams& p) {
  Scenario s;
  s.name = "mix_" + std::to_string(m) + "x" + std::to_string(s_count);
  s.shell = board_shell(kBoard, 3);
  s.accelerators.push_back(kernel("mandel", kBoard, {1}, {p.mandel_compute_us / m, 0, 1.0}));
  s.accelerators.push_back(
      kernel("sobel", kBoard, {1}, {p.sobel_compute_us / s_count, p.sobel_bytes / s_count, 1.0}));
  s.submissions.push_back(batch("mandel_user", "mandel", m));
  s.submissions.push_back(batch("sobel_user", "sobel", s_count));
  return s;
}

std::vector<MixPoint> sweep_mixes(const MixParams& params, int max_replicas) {
  std::vector<MixPoint> out;
  for (int m = 1; m <= max_replicas; ++m) {
    for (int s = 1; s <= max_replicas; ++s) {
      out.push_back({m, s, makespan(mix_scenario(m, s, params))});
    }
  }
  return out;
}

std::vector<Scenario> load_corpus(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Scenario> out;
  for (const auto& f : files) out.push_back(load_scenario(f));
  return out;
}

CheckResult check_oracle_equivalence(const std::vector<Scenario>& corpus) {
  CheckResult r{3, "oracle equivalence", true, ""};
  std::size_t compared = 0;
  std::string failures;
  bool shrink_grow = false;
  for (const auto& s : corpus) {
    if (!within_oracle_limits(s)) continue;
    ++compared;
    shrink_grow = shrink_grow || s.name == "shrink_grow";
    auto diff = diff_jsonl(to_jsonl(run_scenario(s).trace), to_jsonl(oracle_timeline(s)));
    if (!diff.identical) {
      r.pass = false;
      failures += " " + s.name + "@" + std::to_string(diff.line);
    }
  }
  if (compared < 12 || !shrink_grow) r.pass = false;
  r.measured = std::to_string(compared) + " scenarios compared" + (shrink_grow ? "" : ", shrink_grow missing") +
               (failures.empty() ? "" : ", diverged:" + failures);
  return r;
}

CheckResult check_scaling() {
  double parallel = static_cast<double>(makespan(scaling_scenario(3, 100000, false)));
  double serial = static_cast<double>(makespan(scaling_scenario(3, 100000, true)));
  double single = static_cast<double>(makespan(scaling_scenario(1, 100000, false)));
  double long_par = static_cast<double>(makespan(scaling_scenario(3, 1000000, false)));
  double long_ser = static_cast<double>(makespan(scaling_scenario(3, 1000000, true)));
  double ratio = parallel / serial;
  double long_ratio = long_par / long_ser;
  double speedup = 3.0 * single / parallel;
  bool pass = ratio <= 0.40 && std::abs(long_ratio - 1.0 / 3.0) <= 0.1 / 3.0 && speedup >= 2.4;
  return {4, "replication scaling", pass,
          fmt("ratio=%.4f (<=0.40), long-exec ratio=%.4f (1/3 +-10%%), speedup3=%.3f", ratio,
              long_ratio, speedup)};
}

CheckResult check_superlinear() {
  const double factor = 1.775;
  double elastic = static_cast<double>(makespan(superlinear_scenario(16, 100000, factor, false)));
  double fixed = static_cast<double>(makespan(superlinear_scenario(16, 100000, factor, true)));
  double gain = fixed / elastic;
  double configured = 2.0 * factor;
  bool pass = gain >= 3.4 && std::abs(gain - configured) <= 0.05 * configured;
  return {5, "super-linear replacement", pass,
          fmt("throughput gain=%.3fx (configured %.2fx, need >=3.4)", gain, configured)};
}

CheckResult check_stagnation() {
  double l3 = static_cast<double>(makespan(stagnation_scenario(3)));
  double l5 = static_cast<double>(makespan(stagnation_scenario(5)));
  double l6 = static_cast<double>(makespan(stagnation_scenario(6)));
  double rel = std::abs(l3 - l6) / l6;
  bool pass = l6 < l5 && rel <= 0.15;
  return {6, "stagnation and multiples", pass,
          fmt("frame k3=%.0fus k5=%.0fus k6=%.0fus, |k3-k6|/k6=%.4f", l3, l5, l6, rel)};
}

CheckResult check_reuse() {
  ScenarioResult res = run_scenario(reuse_scenario(4));
  std::string order;
  for (const auto& ev : res.trace) {
    if (ev.kind == EventKind::exec_start) order += ev.user;
  }
  bool pass = res.stats.reconfigurations == 1 && res.stats.jobs.size() == 8 && order == "abababab";
  return {7, "reuse", pass,
          "reconfigurations=" + std::to_string(res.stats.reconfigurations) + " over " +
              std::to_string(res.stats.jobs.size()) + " requests, order " + order};
}

CheckResult check_fairness(int trials, std::uint32_t seed) {
  std::size_t violations = 0, instants = 0;
  std::size_t worst = 0;
  for (int t = 0; t < trials; ++t) {
    Scenario s = fairness_scenario(seed + static_cast<std::uint32_t>(t), 12);
    Registry registry;
    registry.add_shell(s.shell);
    for (const auto& a : s.accelerators) registry.add(a);
    Fabric fabric = Fabric::load_shell(s.shell, s.fabric);
    Scheduler sched(fabric, registry, s.scheduler);
    sched.on_dispatch([&](const Scheduler& sc, const DispatchAction&) {
      ++instants;
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const char* u : {"a", "b", "c"}) {
        lo = std::min(lo, sc.dispatched_count(u));
        hi = std::max(hi, sc.dispatched_count(u));
      }
      worst = std::max(worst, hi - lo);
      if (hi - lo > 1) ++violations;
    });
    for (const auto& sub : s.submissions) sched.submit_at(fabric.now(), sub.user, sub.jobs);
    sched.run();
  }
  bool pass = violations == 0 && instants > 0;
  return {8, "fairness", pass,
          std::to_string(trials) + " randomized runs, " + std::to_string(instants) +
              " dispatch instants, max spread " + std::to_string(worst)};
}

CheckResult check_interior_optimum() {
  auto points = sweep_mixes();
  auto best = *std::min_element(points.begin(), points.end(), [](const MixPoint& a, const MixPoint& b) {
    return a.makespan_us < b.makespan_us;
  });
  Micros base = 0, max_mix = 0;
  for (const auto& p : points) {
    if (p.mandel == 1 && p.sobel == 1) base = p.makespan_us;
    if (p.mandel == 3 && p.sobel == 3) max_mix = p.makespan_us;
  }
  double improvement = 1.0 - static_cast<double>(best.makespan_us) / static_cast<double>(base);
  bool interior = !(best.mandel == 3 && best.sobel == 3);
  bool pass = interior && improvement >= 0.30;
  return {9, "multi-tenant interior optimum", pass,
          fmt("best mix %.0f-Mandel x %.0f-Sobel, improvement over 1x1=%.1f%%, 3x3=%.0fus",
              best.mandel, best.sobel, improvement * 100.0, static_cast<double>(max_mix))};
}

CheckResult check_determinism(const std::vector<Scenario>& corpus) {
  std::size_t same = 0;
  for (const auto& s : corpus) {
    if (to_jsonl(run_scenario(s).trace) == to_jsonl(run_scenario(s).trace)) ++same;
  }
  bool pass = !corpus.empty() && same == corpus.size();
  return {11, "determinism", pass,
          std::to_string(same) + "/" + std::to_string(corpus.size()) + " scenarios byte-identical"};
}

bool SuiteReport::all_pass() const {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

std::string SuiteReport::csv() const {
  std::ostringstream out;
  out << "criterion,name,result,measured\n";
  for (const auto& r : results) {
    std::string m = r.measured;
    std::replace(m.begin(), m.end(), '"', '\'');
    out << r.id << ',' << r.name << ',' << (r.pass ? "pass" : "fail") << ",\"" << m << "\"\n";
  }
  return out.str();
}

std::string SuiteReport::summary() const {
  std::ostringstream out;
  std::size_t passed = 0;
  for (const auto& r : results) {
    out << "[" << (r.pass ? "PASS" : "FAIL") << "] " << r.id << " " << r.name << ": " << r.measured
        << "\n";
    if (r.pass) ++passed;
  }
  out << passed << "/" << results.size() << " checks passed\n";
  return out.str();
}

SuiteReport run_suite(const std::filesystem::path& corpus_dir) {
  auto corpus = load_corpus(corpus_dir);
  SuiteReport report;
  report.results.push_back(check_oracle_equivalence(corpus));
  report.results.push_back(check_scaling());
  report.results.push_back(check_superlinear());
  report.results.push_back(check_stagnation());
  report.results.push_back(check_reuse());
  report.results.push_back(check_fairness());
  report.results.push_back(check_interior_optimum());
  report.results.push_back(check_determinism(corpus));
  return report;
}

}  // namespace fos::bench
