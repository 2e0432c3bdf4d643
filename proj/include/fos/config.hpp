#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "fos/error.hpp"
#include "fos/registry.hpp"

namespace fos {

struct FabricConfig {
  std::string profile = "ultra96";
  std::size_t max_regions = 3;
  Micros reconfig_us_per_region = 3810;
  Micros shell_load_us = 20740;
  double bandwidth_per_port_MBs = 1060.0;
  double bandwidth_total_MBs = 3187.0;
  RegionFootprint footprint{17760, 35520, 60, 96};

  // Board presets: "ultra96" (3 regions) and "zcu102" (4 regions).
  static FabricConfig for_profile(std::string_view profile);
  // Overrides the fields present in a JSON object; "profile" selects the base preset.
  static FabricConfig from_json(std::string_view text);
  std::string to_json() const;
  void validate() const;
};

enum class Policy { elastic, fixed };
enum class VariantRule { smallest, largest };

std::string_view policy_name(Policy policy);

struct SchedulerConfig {
  Policy policy = Policy::elastic;
  // Variant preference while two or more users are active.
  VariantRule multi_user_variant = VariantRule::smallest;
  // Delay between a dispatch decision and the action it issues.
  Micros decision_overhead_us = 20;
};

}  // namespace fos
