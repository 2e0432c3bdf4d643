#pragma once

// Single-tenant acceleration library driving the fabric directly through
// generic register-map drivers. Not safe for concurrent callers.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fos/fabric.hpp"
#include "fos/registry.hpp"

namespace fos {

struct AccelHandle {
  DeviceId device = 0;
  std::string function;
  std::vector<std::size_t> regions;
  std::uint32_t base = 0;  // MMIO base of the first region
};

class Hal {
 public:
  Hal(Fabric& fabric, const Registry& registry) : fabric_(fabric), registry_(registry) {}

  // Reuses an idle instance of `name` if one is hosted; otherwise loads the
  // widest variant that fits a free consecutive run of regions.
  AccelHandle load_partial(std::string_view name);

  void set_arg(const AccelHandle& handle, std::string_view reg, std::uint64_t value);
  std::uint64_t get_arg(const AccelHandle& handle, std::string_view reg);
  void start(const AccelHandle& handle);
  // Blocks (in virtual time) until the device finishes; returns its execution time.
  Micros wait_done(const AccelHandle& handle);

  Micros run_function(std::string_view name, const std::map<std::string, std::uint64_t>& params);

  Fabric& fabric() { return fabric_; }

 private:
  const DeviceInstance& checked(const AccelHandle& handle) const;
  AccelHandle handle_for(DeviceId id) const;

  Fabric& fabric_;
  const Registry& registry_;
};

}  // namespace fos
