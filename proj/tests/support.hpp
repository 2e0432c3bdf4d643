#pragma once

#include <filesystem>
#include <cstdint>
#include <string>
#include <vector>

#include "fos/registry.hpp"
#include "fos/scenario.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return FOS_SOURCE_DIR; }
inline std::filesystem::path data_path(const std::string& name) { return source_dir() / "tests" / "data" / name; }
inline std::string data_text(const std::string& name) { return fos::read_text_file(data_path(name)); }

inline fos::ShellDescriptor example_shell() { return fos::parse_shell(data_text("example_shell.json")); }

// Shell named "S<n>" with regions pr0..pr<n-1> laid out like the Ultra96 board.
inline fos::ShellDescriptor shell(std::size_t regions) {
  fos::ShellDescriptor s;
  s.name = "S" + std::to_string(regions);
  s.bitfile = s.name + ".bin";
  for (std::size_t i = 0; i < regions; ++i) {
    fos::RegionDescriptor r;
    r.name = "pr" + std::to_string(i);
    r.blank = "blank" + std::to_string(i) + ".bin";
    r.bridge = static_cast<std::uint32_t>(0xa0010000u + 0x10000u * i);
    r.addr = static_cast<std::uint32_t>(0xa0000000u + 0x1000u * i);
    s.regions.push_back(r);
  }
  return s;
}

struct Kernel {
  std::string name;
  std::vector<std::size_t> spans;  // declaration order
  double compute_us = 10000;
  double bytes = 0;
  double factor = 1.0;
};

inline fos::AcceleratorDescriptor accel(const Kernel& k, const std::string& shell_name) {
  fos::AcceleratorDescriptor a;
  a.name = k.name;
  for (std::size_t span : k.spans) {
    fos::BitstreamVariant v;
    v.name = k.name + "_" + std::to_string(span) + "slot.bin";
    v.shell = shell_name;
    for (std::size_t i = 0; i < span; ++i) v.region.push_back("pr" + std::to_string(i));
    v.latency = {k.compute_us, k.bytes, k.factor};
    a.bitfiles.push_back(v);
  }
  a.registers = fos::RegisterMap({{"control", 0, 32}, {"arg", 0x10, 64}});
  return a;
}

// Scenario on an n-region shell with zero decision overhead unless changed.
inline fos::Scenario scenario(std::size_t regions, const std::vector<Kernel>& kernels) {
  fos::Scenario sc;
  sc.name = "test";
  sc.shell = shell(regions);
  sc.fabric = fos::FabricConfig::for_profile(regions > 3 ? "zcu102" : "ultra96");
  sc.scheduler.decision_overhead_us = 0;
  for (const auto& k : kernels) sc.accelerators.push_back(accel(k, sc.shell.name));
  return sc;
}

inline void submit(fos::Scenario& sc, const std::string& user, fos::Micros at, const std::string& acc,
                   int count) {
  fos::Submission s;
  s.user = user;
  s.at_us = at;
  for (int i = 0; i < count; ++i) s.jobs.push_back({acc, {}});
  sc.submissions.push_back(s);
}

}  // namespace testing

#define CHECK_ERRC(expr, errc)                               \
  do {                                                       \
    bool caught_ = false;                                    \
    try {                                                    \
      (void)(expr);                                          \
    } catch (const fos::Error& e_) {                         \
      caught_ = true;                                        \
      CHECK_MESSAGE(e_.code() == (errc), e_.what());         \
    }                                                        \
    CHECK_MESSAGE(caught_, "expected fos::Error: " #expr);   \
  } while (0)
