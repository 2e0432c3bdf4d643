#include "fos/config.hpp"

#include "json.hpp"

namespace fos {

using nlohmann::json;

std::string_view policy_name(Policy policy) {
  return policy == Policy::fixed ? "fixed" : "elastic";
}

FabricConfig FabricConfig::for_profile(std::string_view profile) {
  FabricConfig c;
  if (profile == "ultra96") return c;
  if (profile == "zcu102") {
    c.profile = "zcu102";
    c.max_regions = 4;
    c.reconfig_us_per_region = 6770;
    c.shell_load_us = 98400;
    c.bandwidth_per_port_MBs = 3200.0;
    c.bandwidth_total_MBs = 8804.0;
    c.footprint = {32640, 65280, 108, 336};
    return c;
  }
  throw Error(Errc::unknown_name, "unknown board profile \"" + std::string(profile) + "\"");
}

FabricConfig FabricConfig::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse, std::string("fabric config: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::parse, "fabric config must be an object");
  FabricConfig c = for_profile(doc.value("profile", std::string("ultra96")));
  try {
    if (doc.contains("max_regions")) c.max_regions = doc["max_regions"].get<std::size_t>();
    if (doc.contains("reconfig_us_per_region")) {
      c.reconfig_us_per_region = doc["reconfig_us_per_region"].get<Micros>();
    }
    if (doc.contains("shell_load_us")) c.shell_load_us = doc["shell_load_us"].get<Micros>();
    if (doc.contains("bandwidth_per_port_MBs")) {
      c.bandwidth_per_port_MBs = doc["bandwidth_per_port_MBs"].get<double>();
    }
    if (doc.contains("bandwidth_total_MBs")) {
      c.bandwidth_total_MBs = doc["bandwidth_total_MBs"].get<double>();
    }
    if (doc.contains("footprint")) {
      const json& f = doc["footprint"];
      c.footprint = {f.at("luts").get<std::uint32_t>(), f.at("regs").get<std::uint32_t>(),
                     f.at("brams").get<std::uint32_t>(), f.at("dsps").get<std::uint32_t>()};
    }
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("fabric config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string FabricConfig::to_json() const {
  nlohmann::ordered_json j;
  j["profile"] = profile;
  j["max_regions"] = max_regions;
  j["reconfig_us_per_region"] = reconfig_us_per_region;
  j["shell_load_us"] = shell_load_us;
  j["bandwidth_per_port_MBs"] = bandwidth_per_port_MBs;
  j["bandwidth_total_MBs"] = bandwidth_total_MBs;
  j["footprint"] = {{"luts", footprint.luts},
                    {"regs", footprint.regs},
                    {"brams", footprint.brams},
                    {"dsps", footprint.dsps}};
  return j.dump();
}

void FabricConfig::validate() const {
  if (reconfig_us_per_region < 0 || shell_load_us < 0) {
    throw Error(Errc::invalid, "fabric latencies must be non-negative");
  }
  if (!(bandwidth_per_port_MBs > 0) || !(bandwidth_total_MBs > 0)) {
    throw Error(Errc::invalid, "fabric bandwidths must be positive");
  }
  if (bandwidth_total_MBs < bandwidth_per_port_MBs) {
    throw Error(Errc::invalid, "total bandwidth below the per-port bandwidth");
  }
  if (footprint.luts == 0 || footprint.regs == 0 || footprint.brams == 0 || footprint.dsps == 0) {
    throw Error(Errc::invalid, "region footprint counts must be positive");
  }
}

}  // namespace fos
