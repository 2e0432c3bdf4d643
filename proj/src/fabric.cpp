#include "fos/fabric.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fos {

std::string_view adaptor_name(AdaptorKind kind) {
  return kind == AdaptorKind::stream_dma ? "stream-dma" : "mm-widening";
}

// ---- buffers ---------------------------------------------------------------

BufferHandle BufferStore::alloc(std::size_t size) {
  if (size == 0) throw Error(Errc::invalid, "buffer size must be positive");
  std::uint64_t addr = next_;
  std::uint64_t pages = (static_cast<std::uint64_t>(size) + kPageBytes - 1) / kPageBytes;
  next_ += pages * kPageBytes;
  buffers_.emplace(addr, std::vector<std::uint8_t>(size, 0));
  return {addr, size};
}

void BufferStore::free(std::uint64_t addr) {
  if (buffers_.erase(addr) == 0) {
    throw Error(Errc::invalid, "free of unallocated buffer " + to_hex(addr));
  }
}

std::optional<BufferHandle> BufferStore::find(std::uint64_t addr) const {
  auto it = buffers_.find(addr);
  if (it == buffers_.end()) return std::nullopt;
  return BufferHandle{addr, it->second.size()};
}

void BufferStore::write(std::uint64_t addr, std::size_t offset,
                        std::span<const std::uint8_t> bytes) {
  auto it = buffers_.find(addr);
  if (it == buffers_.end()) throw Error(Errc::unknown_name, "no buffer at " + to_hex(addr));
  if (offset > it->second.size() || bytes.size() > it->second.size() - offset) {
    throw Error(Errc::out_of_range, "write past the end of buffer " + to_hex(addr));
  }
  std::copy(bytes.begin(), bytes.end(), it->second.begin() + static_cast<std::ptrdiff_t>(offset));
}

std::vector<std::uint8_t> BufferStore::read(std::uint64_t addr, std::size_t offset,
                                            std::size_t len) const {
  auto it = buffers_.find(addr);
  if (it == buffers_.end()) throw Error(Errc::unknown_name, "no buffer at " + to_hex(addr));
  if (offset > it->second.size() || len > it->second.size() - offset) {
    throw Error(Errc::out_of_range, "read past the end of buffer " + to_hex(addr));
  }
  auto first = it->second.begin() + static_cast<std::ptrdiff_t>(offset);
  return {first, first + static_cast<std::ptrdiff_t>(len)};
}

ModelContext::ModelContext(const BufferStore& store, std::map<std::string, std::uint64_t> params,
                           std::set<std::uint64_t> reachable)
    : store_(store), params_(std::move(params)), reachable_(std::move(reachable)) {}

std::uint64_t ModelContext::param(std::string_view name) const {
  auto it = params_.find(std::string(name));
  if (it == params_.end()) throw Error(Errc::unknown_name, "no parameter " + std::string(name));
  return it->second;
}

bool ModelContext::has_param(std::string_view name) const {
  return params_.count(std::string(name)) != 0;
}

void ModelContext::check_reachable(std::uint64_t addr) const {
  if (reachable_.count(addr) == 0) {
    throw Error(Errc::ownership, "buffer " + to_hex(addr) + " is not named by a pointer register");
  }
}

std::size_t ModelContext::size(std::uint64_t addr) const {
  check_reachable(addr);
  auto h = store_.find(addr);
  if (!h) throw Error(Errc::unknown_name, "no buffer at " + to_hex(addr));
  return h->size;
}

std::vector<std::uint8_t> ModelContext::read(std::uint64_t addr, std::size_t offset,
                                             std::size_t len) const {
  check_reachable(addr);
  return store_.read(addr, offset, len);
}

void ModelContext::write(std::uint64_t addr, std::size_t offset, std::vector<std::uint8_t> bytes) {
  check_reachable(addr);
  auto h = store_.find(addr);
  if (!h) throw Error(Errc::unknown_name, "no buffer at " + to_hex(addr));
  if (offset > h->size || bytes.size() > h->size - offset) {
    throw Error(Errc::out_of_range, "model write past the end of buffer " + to_hex(addr));
  }
  staged_.push_back({addr, offset, std::move(bytes)});
}

FunctionalModel vadd_model() {
  FunctionalModel m;
  m.pointer_registers = {"a_op", "b_op", "c_out"};
  m.run = [](ModelContext& ctx) {
    std::uint64_t a = ctx.param("a_op");
    std::uint64_t b = ctx.param("b_op");
    std::uint64_t c = ctx.param("c_out");
    std::size_t n;
    if (ctx.has_param("length")) {
      n = static_cast<std::size_t>(ctx.param("length"));
    } else {
      n = std::min({ctx.size(a), ctx.size(b), ctx.size(c)}) / 4;
    }
    auto va = ctx.read(a, 0, n * 4);
    auto vb = ctx.read(b, 0, n * 4);
    std::vector<std::uint8_t> out(n * 4);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t x, y;
      std::memcpy(&x, va.data() + 4 * i, 4);
      std::memcpy(&y, vb.data() + 4 * i, 4);
      std::uint32_t z = x + y;
      std::memcpy(out.data() + 4 * i, &z, 4);
    }
    ctx.write(c, 0, std::move(out));
  };
  return m;
}

std::uint64_t DeviceInstance::param(const RegisterEntry& reg) const {
  auto word = [&](std::uint32_t off) -> std::uint64_t {
    auto it = words.find(off);
    return it == words.end() ? 0 : it->second;
  };
  std::uint64_t v = word(reg.offset);
  if (reg.width == 64) v |= word(reg.offset + 4) << 32;
  return v;
}

// ---- fabric ----------------------------------------------------------------

Fabric::Fabric(ShellDescriptor shell, FabricConfig config)
    : shell_(std::move(shell)), config_(std::move(config)) {}

Fabric Fabric::load_shell(const ShellDescriptor& shell, const FabricConfig& config) {
  config.validate();
  if (shell.regions.size() > config.max_regions) {
    throw Error(Errc::invalid, "shell " + shell.name + " declares " +
                                   std::to_string(shell.regions.size()) + " regions but profile " +
                                   config.profile + " provides " +
                                   std::to_string(config.max_regions));
  }
  Fabric f(shell, config);
  RegionFootprint fp = shell.footprint.value_or(config.footprint);
  for (const auto& r : shell.regions) {
    Region region;
    region.descriptor = r;
    region.footprint = fp;
    f.regions_.push_back(std::move(region));
  }
  f.header_.shell = shell.name;
  f.header_.profile = config.profile;
  for (const auto& r : shell.regions) f.header_.regions.push_back(r.name);
  f.now_ = config.shell_load_us;
  f.port_free_ = f.now_;
  return f;
}

std::size_t Fabric::region_index(std::string_view name) const {
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    if (regions_[i].descriptor.name == name) return i;
  }
  throw Error(Errc::unknown_name, "unknown region \"" + std::string(name) + "\"");
}

const DeviceInstance& Fabric::device(DeviceId id) const {
  auto it = devices_.find(id);
  if (it == devices_.end()) throw Error(Errc::unknown_name, "no device " + std::to_string(id));
  return it->second;
}

std::optional<DeviceId> Fabric::device_at(std::size_t region) const {
  return regions_.at(region).device;
}

std::vector<DeviceId> Fabric::devices() const {
  std::vector<DeviceId> ids;
  for (const auto& [id, dev] : devices_) ids.push_back(id);
  return ids;
}

bool Fabric::interface_compatible(std::span<const std::size_t> regions, Interface iface) const {
  if (regions.empty()) return false;
  if (iface == Interface::axi_stream_32) {
    return regions_[regions.front()].adaptor == AdaptorKind::stream_dma;
  }
  return std::none_of(regions.begin(), regions.end(), [&](std::size_t r) {
    return regions_[r].adaptor == AdaptorKind::stream_dma;
  });
}

ScheduleEvent Fabric::make_event(EventKind kind, const DeviceInstance* dev, Micros t) const {
  ScheduleEvent ev;
  ev.t_us = t;
  ev.kind = kind;
  if (dev) {
    for (std::size_t r : dev->regions) ev.regions.push_back(regions_[r].descriptor.name);
    ev.first_region = static_cast<int>(dev->regions.front());
    ev.user = dev->owner_user;
    ev.job = dev->owner_job;
    ev.variant = dev->variant.name;
  }
  return ev;
}

void Fabric::emit(ScheduleEvent ev) { log_.push_back(std::move(ev)); }

void Fabric::record(ScheduleEvent ev) { emit(std::move(ev)); }

std::vector<ScheduleEvent> Fabric::trace() const {
  auto out = log_;
  sort_trace(out);
  return out;
}

void Fabric::push(Micros t, EventKind kind, int region, Pending what, DeviceId dev,
                  std::size_t adaptor) {
  queue_.insert(QueuedEvent{t, kind_rank(kind), region, seq_++, what, dev, adaptor});
}

void Fabric::evict(DeviceId id) {
  auto it = devices_.find(id);
  if (it == devices_.end()) return;
  for (std::size_t r : it->second.regions) {
    regions_[r].state = RegionState::blank;
    regions_[r].device.reset();
    regions_[r].decoupled = false;
  }
  devices_.erase(it);
}

DeviceId Fabric::reconfigure(std::span<const std::size_t> regions, std::string_view function,
                             const BitstreamVariant& variant, const RegisterMap& registers,
                             const TaskTag& tag, Micros not_before) {
  if (regions.empty()) throw Error(Errc::invalid, "reconfigure needs at least one region");
  for (std::size_t k = 0; k < regions.size(); ++k) {
    if (regions[k] >= regions_.size()) throw Error(Errc::unknown_name, "region index out of range");
    if (k > 0 && regions[k] != regions[k - 1] + 1) {
      throw Error(Errc::invalid, "target regions are not a consecutive run");
    }
  }
  if (variant.span() != regions.size()) {
    throw Error(Errc::invalid, "variant " + variant.name + " spans " +
                                   std::to_string(variant.span()) + " regions, target has " +
                                   std::to_string(regions.size()));
  }
  if (variant.shell != shell_.name) {
    throw Error(Errc::invalid,
                "variant " + variant.name + " is compiled for shell " + variant.shell);
  }
  for (std::size_t r : regions) {
    const Region& reg = regions_[r];
    if (reg.state == RegionState::reconfiguring || reg.adaptor_pending) {
      throw Error(Errc::busy, "region " + reg.descriptor.name + " is reconfiguring");
    }
    if (reg.device && devices_.at(*reg.device).running()) {
      throw Error(Errc::busy, "region " + reg.descriptor.name + " hosts a running device");
    }
  }
  RegionFootprint capacity = regions_[regions.front()].footprint.scaled(
      static_cast<std::uint32_t>(regions.size()));
  if (variant.resources && !variant.resources->fits_within(capacity)) {
    throw Error(Errc::invalid, "variant " + variant.name + " overflows the region footprint");
  }
  if (!interface_compatible(regions, variant.interface)) {
    throw Error(Errc::invalid, "interface mismatch: variant " + variant.name + " needs " +
                                   std::string(interface_name(variant.interface)));
  }

  std::set<DeviceId> doomed;
  for (std::size_t r : regions) {
    if (regions_[r].device) doomed.insert(*regions_[r].device);
  }
  for (DeviceId id : doomed) evict(id);

  DeviceInstance dev;
  dev.id = next_device_++;
  dev.function = std::string(function);
  dev.variant = variant;
  dev.registers = registers;
  dev.regions.assign(regions.begin(), regions.end());
  dev.owner_user = tag.user;
  dev.owner_job = tag.job;
  for (std::size_t r : regions) {
    regions_[r].state = RegionState::reconfiguring;
    regions_[r].device = dev.id;
    regions_[r].decoupled = true;
  }

  Micros start = std::max({now_, not_before, port_free_});
  Micros done = start + config_.reconfig_us_per_region * static_cast<Micros>(regions.size());
  port_free_ = done;
  ++reconfigurations_;
  emit(make_event(EventKind::reconfig_start, &dev, start));
  push(done, EventKind::reconfig_done, static_cast<int>(regions.front()), Pending::reconfig_done,
       dev.id, 0);
  DeviceId id = dev.id;
  devices_.emplace(id, std::move(dev));
  return id;
}

void Fabric::attach_bus_adaptor(std::size_t region, AdaptorKind kind) {
  Region& reg = regions_.at(region);
  if (reg.state != RegionState::blank || reg.adaptor_pending) {
    throw Error(Errc::busy, "bus adaptor needs a blank region; " + reg.descriptor.name + " is not");
  }
  if (reg.adaptor) throw Error(Errc::busy, "region " + reg.descriptor.name + " already has an adaptor");
  reg.adaptor = kind;
  reg.adaptor_pending = true;
  reg.state = RegionState::reconfiguring;
  reg.decoupled = true;
  Micros start = std::max(now_, port_free_);
  Micros done = start + config_.reconfig_us_per_region;
  port_free_ = done;
  ScheduleEvent ev;
  ev.t_us = start;
  ev.kind = EventKind::reconfig_start;
  ev.regions = {reg.descriptor.name};
  ev.first_region = static_cast<int>(region);
  ev.variant = "adaptor:" + std::string(adaptor_name(kind));
  emit(std::move(ev));
  push(done, EventKind::adaptor_attach, static_cast<int>(region), Pending::adaptor_done, 0, region);
}

void Fabric::detach_bus_adaptor(std::size_t region) {
  Region& reg = regions_.at(region);
  if (reg.state != RegionState::blank || !reg.adaptor) {
    throw Error(Errc::busy, "region " + reg.descriptor.name + " has no detachable adaptor");
  }
  reg.adaptor.reset();
}

Fabric::Window Fabric::decode(std::uint64_t addr) const {
  if (addr % 4 != 0) throw Error(Errc::fault, "unaligned MMIO access at " + to_hex(addr));
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    const auto& d = regions_[i].descriptor;
    if (addr == d.bridge) return {i, true, 0};
    if (addr >= d.addr && addr - d.addr < kRegionWindowBytes) {
      return {i, false, static_cast<std::uint32_t>(addr - d.addr)};
    }
  }
  throw Error(Errc::fault, "unmapped MMIO address " + to_hex(addr));
}

DeviceInstance& Fabric::hosted(std::size_t region) {
  Region& reg = regions_[region];
  if (reg.decoupled) throw Error(Errc::fault, "region " + reg.descriptor.name + " is decoupled");
  if (reg.state != RegionState::hosting || !reg.device) {
    throw Error(Errc::fault, "region " + reg.descriptor.name + " hosts no device");
  }
  return devices_.at(*reg.device);
}

std::uint32_t Fabric::mmio_read(std::uint64_t addr) {
  Window w = decode(addr);
  if (w.bridge) return regions_[w.region].decoupled ? 1u : 0u;
  DeviceInstance& dev = hosted(w.region);
  if (w.offset == 0) {
    std::uint32_t word = 0;
    if (dev.done_flag) word |= ctrl::ap_done;
    if (!dev.running()) word |= ctrl::ap_idle | ctrl::ap_ready;
    if (dev.auto_restart) word |= ctrl::auto_restart;
    dev.done_flag = false;
    if (dev.exec_state == ExecState::done) dev.exec_state = ExecState::idle;
    return word;
  }
  auto it = dev.words.find(w.offset);
  return it == dev.words.end() ? 0u : it->second;
}

void Fabric::mmio_write(std::uint64_t addr, std::uint32_t value) {
  Window w = decode(addr);
  Region& reg = regions_[w.region];
  if (w.bridge) {
    if (reg.state == RegionState::reconfiguring) {
      throw Error(Errc::busy, "region " + reg.descriptor.name + " is reconfiguring");
    }
    reg.decoupled = (value & 1u) != 0;
    ScheduleEvent ev;
    ev.t_us = now_;
    ev.kind = EventKind::decouple;
    ev.regions = {reg.descriptor.name};
    ev.first_region = static_cast<int>(w.region);
    ev.variant = reg.decoupled ? "decoupled" : "coupled";
    emit(std::move(ev));
    return;
  }
  DeviceInstance& dev = hosted(w.region);
  if (w.offset != 0) {
    dev.words[w.offset] = value;
    return;
  }
  dev.auto_restart = (value & ctrl::auto_restart) != 0;
  if ((value & ctrl::ap_start) == 0) return;
  if (dev.running()) {
    emit(make_event(EventKind::start_dropped, &dev, now_));
    return;
  }
  start_device(dev);
}

unsigned Fabric::active_memory_users() const {
  unsigned n = 0;
  for (const auto& [id, dev] : devices_) {
    if (dev.running() && dev.variant.latency.bytes_moved > 0) ++n;
  }
  return n;
}

Micros Fabric::latency(const LatencyModel& model, unsigned active_memory_users,
                       unsigned span) const {
  if (span == 0) throw Error(Errc::invalid, "latency needs a span of at least one slot");
  double compute = model.compute_us /
                   (static_cast<double>(span) *
                    std::pow(model.speedup_per_extra_slot, static_cast<double>(span - 1)));
  double memory = 0.0;
  if (model.bytes_moved > 0) {
    double users = std::max(1u, active_memory_users);
    // MB/s equals bytes per microsecond.
    double bw = std::min(config_.bandwidth_per_port_MBs, config_.bandwidth_total_MBs / users);
    memory = model.bytes_moved / bw;
  }
  return static_cast<Micros>(std::llround(compute + memory));
}

void Fabric::start_device(DeviceInstance& dev) {
  unsigned users = active_memory_users() + (dev.variant.latency.bytes_moved > 0 ? 1u : 0u);
  Micros lat = latency(dev.variant.latency, users, static_cast<unsigned>(dev.regions.size()));
  if (dev.auto_restart) lat = std::max<Micros>(lat, 1);
  dev.exec_state = ExecState::running;
  dev.started_at = now_;
  dev.finish_at = now_ + lat;
  ++dev.starts;
  emit(make_event(EventKind::exec_start, &dev, now_));
  push(dev.finish_at, EventKind::exec_done, static_cast<int>(dev.regions.front()),
       Pending::exec_done, dev.id, 0);
}

void Fabric::complete_device(DeviceInstance& dev) {
  dev.exec_state = ExecState::done;
  dev.done_flag = true;
  ++dev.completions;
  auto model = models_.find(dev.function);
  if (model != models_.end() && model->second.run) {
    std::map<std::string, std::uint64_t> params;
    for (const auto& reg : dev.registers.entries()) {
      if (reg.name != kControlRegister) params[reg.name] = dev.param(reg);
    }
    std::set<std::uint64_t> reachable;
    for (const auto& name : model->second.pointer_registers) {
      if (auto it = params.find(name); it != params.end()) reachable.insert(it->second);
    }
    ModelContext ctx(buffers_, std::move(params), std::move(reachable));
    try {
      model->second.run(ctx);
      for (const auto& w : ctx.staged()) buffers_.write(w.addr, w.offset, w.bytes);
      dev.model_error.clear();
    } catch (const std::exception& e) {
      dev.model_error = e.what();
    }
  }
}

void Fabric::set_owner(DeviceId id, const TaskTag& tag) {
  auto it = devices_.find(id);
  if (it == devices_.end()) throw Error(Errc::unknown_name, "no device " + std::to_string(id));
  it->second.owner_user = tag.user;
  it->second.owner_job = tag.job;
}

void Fabric::register_model(std::string function, FunctionalModel model) {
  models_.insert_or_assign(std::move(function), std::move(model));
}

std::optional<Micros> Fabric::next_event_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.begin()->t;
}

std::optional<ScheduleEvent> Fabric::step() {
  if (queue_.empty()) return std::nullopt;
  QueuedEvent qe = *queue_.begin();
  queue_.erase(queue_.begin());
  now_ = std::max(now_, qe.t);

  if (qe.what == Pending::adaptor_done) {
    Region& reg = regions_[qe.adaptor_region];
    reg.adaptor_pending = false;
    reg.state = RegionState::blank;
    reg.decoupled = false;
    ScheduleEvent ev;
    ev.t_us = now_;
    ev.kind = EventKind::adaptor_attach;
    ev.regions = {reg.descriptor.name};
    ev.first_region = static_cast<int>(qe.adaptor_region);
    ev.variant = "adaptor:" + std::string(adaptor_name(*reg.adaptor));
    emit(ev);
    if (listener_) listener_(ev, 0);
    return ev;
  }

  DeviceInstance& dev = devices_.at(qe.device);
  ScheduleEvent ev;
  if (qe.what == Pending::reconfig_done) {
    dev.configured = true;
    dev.exec_state = ExecState::idle;
    dev.done_flag = false;
    dev.words.clear();
    for (std::size_t r : dev.regions) {
      regions_[r].state = RegionState::hosting;
      regions_[r].decoupled = false;
    }
    ev = make_event(EventKind::reconfig_done, &dev, now_);
  } else {
    complete_device(dev);
    ev = make_event(EventKind::exec_done, &dev, now_);
  }
  emit(ev);
  DeviceId id = dev.id;
  if (listener_) listener_(ev, id);
  if (qe.what == Pending::exec_done) {
    auto it = devices_.find(id);
    if (it != devices_.end() && it->second.auto_restart && !it->second.running()) {
      it->second.done_flag = true;
      start_device(it->second);
    }
  }
  return ev;
}

void Fabric::run_until(Micros t) {
  while (!queue_.empty() && queue_.begin()->t <= t) step();
  now_ = std::max(now_, t);
}

void Fabric::advance_clock(Micros t) {
  if (!queue_.empty() && queue_.begin()->t < t) {
    throw Error(Errc::invalid, "clock advance would skip a pending event");
  }
  now_ = std::max(now_, t);
}

}  // namespace fos
