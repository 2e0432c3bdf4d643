// Runs the acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "fos/bench.hpp"
#include "fos/client.hpp"
#include "fos/daemon.hpp"
#include "fos/fabric.hpp"
#include "fos/registry.hpp"

using namespace fos;
using bench::CheckResult;

namespace {

const std::filesystem::path kSource = FOS_SOURCE_DIR;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CheckResult descriptor_fidelity() {
  auto t0 = std::chrono::steady_clock::now();
  CheckResult r{1, "descriptor fidelity", false, ""};
  std::vector<std::string> bad;
  try {
    ShellDescriptor s = parse_shell(slurp(kSource / "tests" / "data" / "example_shell.json"));
    if (s.regions.size() != 3) bad.push_back("region count");
    if (s.regions.empty() || s.regions[0].name != "pr0" || s.regions[0].addr != 0xa0000000u) bad.push_back("pr0 addr");
    std::string once = serialize_shell(s);
    if (!(parse_shell(once) == s) || serialize_shell(parse_shell(once)) != once) bad.push_back("shell round trip");

    AcceleratorDescriptor a = parse_accelerator(slurp(kSource / "tests" / "data" / "vadd_accel.json"));
    if (a.name != "vadd") bad.push_back("accelerator name");
    if (a.registers.at("a_op").offset != 0x10) bad.push_back("a_op offset");
    std::string text = serialize_accelerator(a);
    if (!(parse_accelerator(text) == a) || serialize_accelerator(parse_accelerator(text)) != text) {
      bad.push_back("accelerator round trip");
    }
  } catch (const Error& e) {
    bad.push_back(e.what());
  }
  double secs = seconds_since(t0);
  if (secs >= 1.0) bad.push_back("slow");
  r.pass = bad.empty();
  std::ostringstream m;
  m << "3 regions, pr0@0xa0000000, a_op@0x10, byte-stable; " << secs * 1000 << " ms";
  for (const auto& b : bad) m << "; mismatch: " << b;
  r.measured = m.str();
  return r;
}

BitstreamVariant one_slot(const std::string& shell, std::size_t region, double compute_us) {
  BitstreamVariant v;
  v.name = "k.bin";
  v.shell = shell;
  v.region = {"pr" + std::to_string(region)};
  v.latency.compute_us = compute_us;
  return v;
}

CheckResult control_bits() {
  CheckResult r{2, "control-bit protocol", false, ""};
  ShellDescriptor shell = parse_shell(slurp(kSource / "tests" / "data" / "example_shell.json"));
  FabricConfig cfg = FabricConfig::for_profile("ultra96");
  RegisterMap regs({{"control", 0, 32}, {"arg", 0x10, 64}});
  std::mt19937 rng(7);
  const int sequences = 10000;
  long violations = 0, operations = 0;
  for (int seq = 0; seq < sequences; ++seq) {
    Fabric f = Fabric::load_shell(shell, cfg);
    int devices = 1 + static_cast<int>(rng() % 3);
    std::vector<DeviceId> ids;
    for (int d = 0; d < devices; ++d) {
      auto v = one_slot(shell.name, static_cast<std::size_t>(d), 1.0 + rng() % 5000);
      std::vector<std::size_t> run{static_cast<std::size_t>(d)};
      ids.push_back(f.reconfigure(run, "k", v, regs));
    }
    while (f.step()) {
    }
    // Expected per-device state: running, and the sticky done bit.
    std::vector<bool> running(devices, false), done(devices, false);
    std::vector<long> starts(devices, 0), dones(devices, 0);
    int ops = 10 + static_cast<int>(rng() % 50);
    for (int op = 0; op < ops; ++op, ++operations) {
      int d = static_cast<int>(rng() % devices);
      std::uint32_t base = shell.regions[d].addr;
      switch (rng() % 3) {
        case 0:
          f.mmio_write(base, ctrl::ap_start);
          if (!running[d]) {
            running[d] = true;
            ++starts[d];
          }
          break;
        case 1: {
          std::uint32_t c = f.mmio_read(base);
          if (((c & ctrl::ap_idle) != 0) == running[d]) ++violations;
          if (((c & ctrl::ap_done) != 0) != done[d]) ++violations;
          done[d] = false;
          break;
        }
        default:
          if (auto ev = f.step(); ev && ev->kind == EventKind::exec_done) {
            int k = ev->first_region;
            if (!running[k]) ++violations;
            running[k] = false;
            done[k] = true;
            ++dones[k];
          }
      }
      for (int k = 0; k < devices; ++k) {
        if (f.device(ids[k]).running() != running[k]) ++violations;
        if (starts[k] != dones[k] && starts[k] != dones[k] + 1) ++violations;
      }
    }
  }
  r.pass = violations == 0;
  r.measured = std::to_string(sequences) + " sequences, " + std::to_string(operations) + " operations, " +
               std::to_string(violations) + " violations";
  return r;
}

CheckResult overhead_accounting() {
  CheckResult r{10, "overhead accounting", false, ""};
  try {
    ServiceConfig cfg;
    cfg.shell_file = kSource / "repo" / "shells" / "ultra96.json";
    cfg.repo_dir = kSource / "repo";
    DaemonOptions opts{wire::Endpoint::parse("127.0.0.1:0"), {}, false, {}};
    Daemon daemon(cfg, opts);
    daemon.start();
    wire::Endpoint ep = opts.endpoint;
    ep.port = daemon.port();
    Micros startup = daemon.startup_us();
    Micros expected_startup = 20740 + 12200 + 2270;

    Client c = Client::connect(ep, "acceptance");
    RunResult run = c.run({{"vadd", {}}});
    c.shutdown();
    daemon.wait();

    const JobCompletion& j = run.jobs.at(0);
    Micros expected_total = 710 + j.reconfig_us + j.exec_us;
    r.pass = startup == expected_startup && j.rpc_us == 710 && j.queue_us == 0 && j.latency_us == expected_total &&
             j.reconfig_us > 0;
    std::ostringstream m;
    m << "startup=" << startup << "us (expect " << expected_startup << "), total=" << j.latency_us
      << "us = rpc " << j.rpc_us << " + reconfig " << j.reconfig_us << " + exec " << j.exec_us;
    r.measured = m.str();
  } catch (const Error& e) {
    r.measured = std::string("error: ") + e.what();
  }
  return r;
}

}  // namespace

int main() {
  auto corpus = bench::load_corpus(kSource / "scenarios");
  std::vector<CheckResult> results;
  results.push_back(descriptor_fidelity());
  results.push_back(control_bits());
  results.push_back(bench::check_oracle_equivalence(corpus));
  results.push_back(bench::check_scaling());
  results.push_back(bench::check_superlinear());
  results.push_back(bench::check_stagnation());
  results.push_back(bench::check_reuse());
  results.push_back(bench::check_fairness());
  results.push_back(bench::check_interior_optimum());
  results.push_back(overhead_accounting());
  results.push_back(bench::check_determinism(corpus));

  int failed = 0;
  for (const auto& r : results) {
    std::printf("[%s] %d %s: %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.measured.c_str());
    failed += !r.pass;
  }
  std::printf("%zu/%zu criteria passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}
