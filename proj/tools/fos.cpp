#include <pthread.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fos/bench.hpp"
#include "fos/client.hpp"
#include "fos/daemon.hpp"
#include "fos/oracle.hpp"
#include "fos/scenario.hpp"
#include "fos/scheduler.hpp"

namespace {

std::string default_endpoint() { return fos::wire::Endpoint::from_env().str(); }

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

int cmd_daemon(const fos::ServiceConfig& config, const std::string& endpoint,
               const std::string& local, const std::string& trace_out, bool realtime) {
  fos::DaemonOptions opts;
  opts.endpoint = fos::wire::Endpoint::parse(endpoint);
  if (!local.empty()) opts.local_endpoint = fos::wire::Endpoint::parse("unix:" + local);
  opts.realtime = realtime;
  opts.trace_out = trace_out;
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
  fos::Daemon daemon(config, opts);
  daemon.start();
  std::atomic<bool> done{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    if (!done) daemon.stop();
  });
  fos::wire::Endpoint bound = opts.endpoint;
  bound.port = daemon.port();
  std::cout << "fos daemon listening on " << bound.str() << " (startup " << daemon.startup_us()
            << " us virtual)" << std::endl;
  daemon.wait();
  done = true;
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

int cmd_submit(const std::string& endpoint, const std::string& user, const std::string& acc,
               int jobs, const std::vector<std::string>& params) {
  fos::wire::WireJob job;
  job.name = acc;
  for (const auto& kv : params) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --param expects NAME=VALUE, got \"" << kv << "\"\n";
      return 2;
    }
    job.params[kv.substr(0, eq)] = fos::parse_number(kv.substr(eq + 1));
  }
  auto client = fos::Client::connect(fos::wire::Endpoint::parse(endpoint), user);
  auto result = client.run(std::vector<fos::wire::WireJob>(static_cast<std::size_t>(jobs), job));
  std::cout << "user,job_id,latency_us,queue_us,reconfig_us,exec_us,regions,variant\n";
  for (const auto& c : result.jobs) {
    std::cout << client.user() << ',' << c.job << ',' << c.latency_us << ',' << c.queue_us << ','
              << c.reconfig_us << ',' << c.exec_us << ',';
    for (std::size_t i = 0; i < c.regions.size(); ++i) std::cout << (i ? ";" : "") << c.regions[i];
    std::cout << ',' << c.variant << '\n';
  }
  std::cerr << "ticket " << result.ticket << " complete, latency " << result.latency_us << " us\n";
  return 0;
}

int cmd_scenario(const std::string& file, const std::string& out, const std::string& metrics,
                 const std::string& baseline, bool check_oracle) {
  fos::Scenario s = fos::load_scenario(file);
  std::optional<fos::Policy> policy;
  if (baseline == "fixed") policy = fos::Policy::fixed;
  else if (!baseline.empty()) {
    std::cerr << "error: unknown baseline \"" << baseline << "\"\n";
    return 2;
  }
  auto result = fos::run_scenario(s, policy);
  std::string jsonl = fos::to_jsonl(result.trace);
  if (out.empty()) std::cout << jsonl;
  else if (!write_file(out, jsonl)) {
    std::cerr << "error: cannot write " << out << "\n";
    return 1;
  }
  if (!metrics.empty() && !write_file(metrics, fos::metrics_csv(result.stats))) {
    std::cerr << "error: cannot write " << metrics << "\n";
    return 1;
  }
  std::cerr << s.name << ": " << result.stats.jobs.size() << " jobs, makespan "
            << result.stats.makespan_us << " us, " << result.stats.reconfigurations
            << " reconfigurations\n";
  if (check_oracle) {
    if (policy) s.scheduler.policy = *policy;
    auto diff = fos::diff_jsonl(jsonl, fos::to_jsonl(fos::oracle_timeline(s)));
    if (!diff.identical) {
      std::cerr << "oracle mismatch at line " << diff.line << "\n  scheduler: " << diff.left
                << "\n  oracle:    " << diff.right << "\n";
      return 1;
    }
    std::cerr << "oracle: identical\n";
  }
  return 0;
}

int cmd_trace_diff(const std::string& a, const std::string& b) {
  auto diff = fos::diff_jsonl(fos::read_text_file(a), fos::read_text_file(b));
  if (diff.identical) {
    std::cout << "identical\n";
    return 0;
  }
  std::cout << "first divergence at line " << diff.line << "\n< " << diff.left << "\n> "
            << diff.right << "\n";
  return 1;
}

int cmd_suite(const std::string& corpus, const std::string& csv) {
  auto report = fos::bench::run_suite(corpus);
  std::cout << report.summary();
  if (!csv.empty() && !write_file(csv, report.csv())) {
    std::cerr << "error: cannot write " << csv << "\n";
    return 1;
  }
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FPGA runtime: daemon, client and scenario tools"};
  app.require_subcommand(1);

  fos::ServiceConfig config;
  std::string endpoint = default_endpoint();
  std::string local, trace_out;
  bool realtime = false;
  auto* daemon = app.add_subcommand("daemon", "Serve the multi-tenant runtime");
  daemon->add_option("--shell", config.shell_file, "Shell descriptor file")->capture_default_str();
  daemon->add_option("--repo", config.repo_dir, "Descriptor repository directory")->capture_default_str();
  daemon->add_option("--profile", config.profile, "Board profile")
      ->check(CLI::IsMember({"ultra96", "zcu102"}))
      ->capture_default_str();
  daemon->add_option("--endpoint", endpoint, "HOST:PORT to listen on")->capture_default_str();
  daemon->add_option("--local", local, "Also listen on this local socket path");
  daemon->add_option("--trace-out", trace_out, "Write the JSONL trace here at shutdown");
  daemon->add_option("--overhead-us", config.scheduler.decision_overhead_us,
                     "Scheduler decision overhead")
      ->capture_default_str();
  daemon->add_flag("--realtime", realtime, "Pace virtual time by the wall clock");

  std::string user, acc;
  int jobs = 1;
  std::vector<std::string> params;
  auto* submit = app.add_subcommand("submit", "Run jobs on a daemon");
  submit->add_option("--endpoint", endpoint)->capture_default_str();
  submit->add_option("--user", user, "User id (daemon assigns one when empty)");
  submit->add_option("--acc", acc, "Accelerator name")->required();
  submit->add_option("--jobs", jobs, "Number of identical jobs")->check(CLI::NonNegativeNumber);
  submit->add_option("--param", params, "NAME=VALUE, decimal or 0x hex");

  std::string file, out, metrics, baseline;
  bool oracle = false;
  auto* scenario = app.add_subcommand("scenario", "Run a scenario file offline");
  scenario->add_option("file", file)->required()->check(CLI::ExistingFile);
  scenario->add_option("--out", out, "Trace JSONL output (stdout when omitted)");
  scenario->add_option("--metrics", metrics, "Per-job metrics CSV output");
  scenario->add_option("--baseline", baseline, "Override the policy: fixed");
  scenario->add_flag("--oracle", oracle, "Compare against the reference timeline");

  std::string a, b;
  auto* diff = app.add_subcommand("trace-diff", "Compare two JSONL traces");
  diff->add_option("a", a)->required()->check(CLI::ExistingFile);
  diff->add_option("b", b)->required()->check(CLI::ExistingFile);

  std::string corpus = "scenarios", csv;
  auto* suite = app.add_subcommand("suite", "Run the acceptance scenario suite");
  suite->add_option("--corpus", corpus)->capture_default_str();
  suite->add_option("--csv", csv, "Write the report as CSV");

  auto* status = app.add_subcommand("status", "Query a daemon");
  status->add_option("--endpoint", endpoint)->capture_default_str();
  auto* stop = app.add_subcommand("shutdown", "Stop a daemon");
  stop->add_option("--endpoint", endpoint)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*daemon) return cmd_daemon(config, endpoint, local, trace_out, realtime);
    if (*submit) return cmd_submit(endpoint, user, acc, jobs, params);
    if (*scenario) return cmd_scenario(file, out, metrics, baseline, oracle);
    if (*diff) return cmd_trace_diff(a, b);
    if (*suite) return cmd_suite(corpus, csv);
    if (*status) {
      auto c = fos::Client::connect(fos::wire::Endpoint::parse(endpoint));
      std::cout << c.status().dump(2) << "\n";
      return 0;
    }
    if (*stop) {
      auto c = fos::Client::connect(fos::wire::Endpoint::parse(endpoint));
      c.shutdown();
      return 0;
    }
  } catch (const fos::Error& e) {
    std::cerr << "error (" << fos::errc_name(e.code()) << "): " << e.what() << "\n";
    return 1;
  }
  return 0;
}
