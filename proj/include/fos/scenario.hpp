#pragma once

// Scripted workloads: a shell, accelerator descriptors, fabric and scheduler
// settings, and timed job submissions. Consumed by the scenario runner, the
// timeline oracle, the bench suite and the CLI.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fos/config.hpp"
#include "fos/registry.hpp"

namespace fos {

struct JobRequest {
  std::string accname;
  std::map<std::string, std::uint64_t> params;
};

struct Submission {
  std::string user;
  Micros at_us = 0;  // relative to the moment the shell finishes loading
  std::vector<JobRequest> jobs;
};

struct AdaptorSpec {
  std::string region;
  std::string kind;  // "mm-widening" or "stream-dma"
};

struct Scenario {
  std::string name;
  std::string description;
  FabricConfig fabric;
  SchedulerConfig scheduler;
  ShellDescriptor shell;
  std::vector<AcceleratorDescriptor> accelerators;
  std::vector<AdaptorSpec> adaptors;
  std::vector<Submission> submissions;  // stably ordered by at_us
};

// `base_dir` resolves a relative "shell_file".
Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

std::size_t job_count(const Scenario& scenario);

}  // namespace fos
