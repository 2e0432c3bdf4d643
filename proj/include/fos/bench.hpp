#pragma once

// Acceptance scenarios and trend checks over the scheduler, with the
// oracle as the reference for trace equality.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fos/scenario.hpp"
#include "fos/scheduler.hpp"

namespace fos::bench {

struct CheckResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string measured;  // short human-readable figures
};

struct SuiteReport {
  std::vector<CheckResult> results;
  bool all_pass() const;
  std::string csv() const;
  std::string summary() const;
};

// Single user issuing `jobs` requests of a 1-slot compute-bound kernel on
// the 3-region board. `fixed` selects the one-at-a-time baseline.
Scenario scaling_scenario(int jobs, Micros exec_us, bool fixed);
// One frame of `frame_us` compute split into k equal requests.
Scenario stagnation_scenario(int k, Micros frame_us = 300000);
// DCT with 1- and 2-slot variants on a 2-region shell.
Scenario superlinear_scenario(int jobs, Micros exec_us, double factor, bool fixed);
Scenario reuse_scenario(int requests_per_tenant);
// Three users of 1-slot kernels with latencies drawn from `seed`.
Scenario fairness_scenario(std::uint32_t seed, int jobs_per_user);

struct MixParams {
  double mandel_compute_us = 100000;
  double sobel_compute_us = 0;
  double sobel_bytes = 200e6;
};
// Mandel split into m requests and Sobel into s requests, both tenants at once.
Scenario mix_scenario(int m, int s, const MixParams& params = {});

struct MixPoint {
  int mandel = 0;
  int sobel = 0;
  Micros makespan_us = 0;
};
std::vector<MixPoint> sweep_mixes(const MixParams& params = {}, int max_replicas = 3);

std::vector<Scenario> load_corpus(const std::filesystem::path& dir);

CheckResult check_oracle_equivalence(const std::vector<Scenario>& corpus);
CheckResult check_scaling();
CheckResult check_superlinear();
CheckResult check_stagnation();
CheckResult check_reuse();
CheckResult check_fairness(int trials = 200, std::uint32_t seed = 1);
CheckResult check_interior_optimum();
CheckResult check_determinism(const std::vector<Scenario>& corpus);

// The scenario-level checks above, in criterion order.
SuiteReport run_suite(const std::filesystem::path& corpus_dir);

}  // namespace fos::bench
