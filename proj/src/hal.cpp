#include "fos/hal.hpp"

namespace fos {

const DeviceInstance& Hal::checked(const AccelHandle& handle) const {
  const DeviceInstance* dev = nullptr;
  try {
    dev = &fabric_.device(handle.device);
  } catch (const Error&) {
    throw Error(Errc::unknown_name, "stale handle for " + handle.function);
  }
  if (dev->function != handle.function) {
    throw Error(Errc::unknown_name, "stale handle for " + handle.function);
  }
  return *dev;
}

AccelHandle Hal::handle_for(DeviceId id) const {
  const DeviceInstance& dev = fabric_.device(id);
  AccelHandle h;
  h.device = id;
  h.function = dev.function;
  h.regions = dev.regions;
  h.base = fabric_.region(dev.regions.front()).descriptor.addr;
  return h;
}

AccelHandle Hal::load_partial(std::string_view name) {
  const AcceleratorDescriptor& accel = registry_.lookup(name);
  for (DeviceId id : fabric_.devices()) {
    const DeviceInstance& dev = fabric_.device(id);
    if (dev.function == name && dev.configured && !dev.running()) return handle_for(id);
  }

  auto variants = registry_.variants_for(name, fabric_.shell().name);
  auto usable = [&](std::size_t r, bool blank_only) {
    const Region& reg = fabric_.region(r);
    if (reg.adaptor_pending || reg.state == RegionState::reconfiguring) return false;
    if (reg.state == RegionState::blank) return true;
    return !blank_only && !fabric_.device(*reg.device).running();
  };
  for (bool blank_only : {true, false}) {
    for (const auto& v : variants) {
      std::size_t span = v.span();
      for (std::size_t first = 0; first + span <= fabric_.region_count(); ++first) {
        std::vector<std::size_t> run;
        for (std::size_t r = first; r < first + span; ++r) run.push_back(r);
        bool ok = true;
        for (std::size_t r : run) ok = ok && usable(r, blank_only);
        if (!ok || !fabric_.interface_compatible(run, v.interface)) continue;
        DeviceId id = fabric_.reconfigure(run, accel.name, v, accel.registers);
        while (!fabric_.device(id).configured) fabric_.step();
        return handle_for(id);
      }
    }
  }
  throw Error(Errc::no_capacity, "no free region run fits a variant of " + std::string(name));
}

void Hal::set_arg(const AccelHandle& handle, std::string_view reg, std::uint64_t value) {
  const DeviceInstance& dev = checked(handle);
  const RegisterEntry& entry = dev.registers.at(reg);
  if (entry.name == kControlRegister) {
    throw Error(Errc::invalid, "the control register is driven by start()");
  }
  fabric_.mmio_write(handle.base + entry.offset, static_cast<std::uint32_t>(value));
  if (entry.width == 64) {
    fabric_.mmio_write(handle.base + entry.offset + 4, static_cast<std::uint32_t>(value >> 32));
  }
}

std::uint64_t Hal::get_arg(const AccelHandle& handle, std::string_view reg) {
  const DeviceInstance& dev = checked(handle);
  const RegisterEntry& entry = dev.registers.at(reg);
  std::uint64_t v = fabric_.mmio_read(handle.base + entry.offset);
  if (entry.width == 64) {
    v |= static_cast<std::uint64_t>(fabric_.mmio_read(handle.base + entry.offset + 4)) << 32;
  }
  return v;
}

void Hal::start(const AccelHandle& handle) {
  if (checked(handle).running()) throw Error(Errc::busy, handle.function + " is already running");
  fabric_.mmio_write(handle.base, ctrl::ap_start);
}

Micros Hal::wait_done(const AccelHandle& handle) {
  while (checked(handle).running()) {
    if (!fabric_.step()) break;
  }
  const DeviceInstance& dev = checked(handle);
  Micros elapsed = dev.finish_at - dev.started_at;
  fabric_.mmio_read(handle.base);  // consumes ap_done
  return elapsed;
}

Micros Hal::run_function(std::string_view name,
                         const std::map<std::string, std::uint64_t>& params) {
  const AcceleratorDescriptor& accel = registry_.lookup(name);
  for (const auto& [reg, value] : params) accel.registers.at(reg);
  AccelHandle h = load_partial(name);
  for (const auto& [reg, value] : params) set_arg(h, reg, value);
  start(h);
  return wait_done(h);
}

}  // namespace fos
