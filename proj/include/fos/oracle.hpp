#pragma once

// Reference timeline for small scenarios, computed by exhaustive scanning of
// flat arrays. Shares no state or code with the fabric and scheduler; only
// the trace types and their canonical ordering are common.

#include <vector>

#include "fos/scenario.hpp"
#include "fos/trace.hpp"

namespace fos {

struct OracleLimits {
  std::size_t max_regions = 4;
  std::size_t max_users = 4;
  std::size_t max_jobs = 32;
};

bool within_oracle_limits(const Scenario& scenario, const OracleLimits& limits = {});

// Throws out_of_range when the scenario exceeds `limits`.
std::vector<ScheduleEvent> oracle_timeline(const Scenario& scenario,
                                           const OracleLimits& limits = {});

}  // namespace fos
