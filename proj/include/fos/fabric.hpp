#pragma once

// Discrete-event model of a partially reconfigurable fabric: homogeneous
// regions, one FIFO reconfiguration port, decouplers, per-device register
// files with HLS control semantics, a contiguous buffer store, and a
// memory-bandwidth contention model. Single owner; not thread safe.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "fos/config.hpp"
#include "fos/error.hpp"
#include "fos/registry.hpp"
#include "fos/trace.hpp"

namespace fos {

namespace ctrl {
inline constexpr std::uint32_t ap_start = 1u << 0;
inline constexpr std::uint32_t ap_done = 1u << 1;
inline constexpr std::uint32_t ap_idle = 1u << 2;
inline constexpr std::uint32_t ap_ready = 1u << 3;
inline constexpr std::uint32_t auto_restart = 1u << 7;
}  // namespace ctrl

enum class AdaptorKind { mm_widening, stream_dma };
std::string_view adaptor_name(AdaptorKind kind);

struct BufferHandle {
  std::uint64_t addr = 0;
  std::size_t size = 0;
  friend bool operator==(const BufferHandle&, const BufferHandle&) = default;
};

inline constexpr std::uint64_t kBufferBase = 0x10000000ull;
inline constexpr std::uint64_t kPageBytes = 0x1000ull;

class BufferStore {
 public:
  BufferHandle alloc(std::size_t size);
  void free(std::uint64_t addr);
  void write(std::uint64_t addr, std::size_t offset, std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> read(std::uint64_t addr, std::size_t offset, std::size_t len) const;
  std::optional<BufferHandle> find(std::uint64_t addr) const;
  std::size_t live_count() const { return buffers_.size(); }

 private:
  std::map<std::uint64_t, std::vector<std::uint8_t>> buffers_;
  std::uint64_t next_ = kBufferBase;
};

// Buffer view handed to a functional model. Reads see the store as of the
// completion instant; writes are staged and committed only if the model
// returns normally. Only addresses held in pointer registers are reachable.
class ModelContext {
 public:
  ModelContext(const BufferStore& store, std::map<std::string, std::uint64_t> params,
               std::set<std::uint64_t> reachable);

  std::uint64_t param(std::string_view name) const;
  bool has_param(std::string_view name) const;
  std::size_t size(std::uint64_t addr) const;
  std::vector<std::uint8_t> read(std::uint64_t addr, std::size_t offset, std::size_t len) const;
  void write(std::uint64_t addr, std::size_t offset, std::vector<std::uint8_t> bytes);

  struct StagedWrite {
    std::uint64_t addr;
    std::size_t offset;
    std::vector<std::uint8_t> bytes;
  };
  const std::vector<StagedWrite>& staged() const { return staged_; }

 private:
  void check_reachable(std::uint64_t addr) const;

  const BufferStore& store_;
  std::map<std::string, std::uint64_t> params_;
  std::set<std::uint64_t> reachable_;
  std::vector<StagedWrite> staged_;
};

struct FunctionalModel {
  std::vector<std::string> pointer_registers;
  std::function<void(ModelContext&)> run;
};

// Element-wise int32 add of a_op and b_op into c_out. The element count is
// the "length" register when the map has one, else the smallest buffer / 4.
FunctionalModel vadd_model();

enum class ExecState { idle, running, done };

using DeviceId = std::uint32_t;

struct DeviceInstance {
  DeviceId id = 0;
  std::string function;
  BitstreamVariant variant;
  RegisterMap registers;
  std::vector<std::size_t> regions;
  bool configured = false;  // false while the bitstream is still on the port
  ExecState exec_state = ExecState::idle;
  bool done_flag = false;
  bool auto_restart = false;
  Micros started_at = 0;
  Micros finish_at = 0;
  std::map<std::uint32_t, std::uint32_t> words;  // offset -> register word
  std::string owner_user;
  std::int64_t owner_job = -1;
  std::uint64_t starts = 0;
  std::uint64_t completions = 0;
  std::string model_error;  // last functional-model failure, if any

  bool running() const { return exec_state == ExecState::running; }
  std::uint64_t param(const RegisterEntry& reg) const;
};

enum class RegionState { blank, reconfiguring, hosting };

struct Region {
  RegionDescriptor descriptor;
  RegionFootprint footprint;
  RegionState state = RegionState::blank;
  std::optional<DeviceId> device;
  std::optional<AdaptorKind> adaptor;
  bool adaptor_pending = false;
  bool decoupled = false;
};

struct TaskTag {
  std::string user;
  std::int64_t job = -1;
};

class Fabric {
 public:
  // Clock starts at 0 and the shell load advances it by shell_load_us.
  static Fabric load_shell(const ShellDescriptor& shell, const FabricConfig& config);

  Micros now() const { return now_; }
  const FabricConfig& config() const { return config_; }
  const ShellDescriptor& shell() const { return shell_; }
  const TraceHeader& header() const { return header_; }

  std::size_t region_count() const { return regions_.size(); }
  const Region& region(std::size_t index) const { return regions_.at(index); }
  std::size_t region_index(std::string_view name) const;

  const DeviceInstance& device(DeviceId id) const;
  std::optional<DeviceId> device_at(std::size_t region) const;
  std::vector<DeviceId> devices() const;

  // Queues a bitstream on the reconfiguration port. Idle devices overlapping
  // the target run are evicted (zero-cost blanking). Starts no earlier than
  // `not_before`. Returns the new device, configured when reconfig_done fires.
  DeviceId reconfigure(std::span<const std::size_t> regions, std::string_view function,
                       const BitstreamVariant& variant, const RegisterMap& registers,
                       const TaskTag& tag = {}, Micros not_before = 0);
  Micros port_free_at() const { return port_free_; }

  void attach_bus_adaptor(std::size_t region, AdaptorKind kind);
  void detach_bus_adaptor(std::size_t region);
  bool interface_compatible(std::span<const std::size_t> regions, Interface iface) const;

  std::uint32_t mmio_read(std::uint64_t addr);
  void mmio_write(std::uint64_t addr, std::uint32_t value);

  // Tags subsequent events of the device with a user and job.
  void set_owner(DeviceId id, const TaskTag& tag);
  void register_model(std::string function, FunctionalModel model);

  Micros latency(const LatencyModel& model, unsigned active_memory_users, unsigned span) const;
  unsigned active_memory_users() const;

  BufferHandle alloc(std::size_t size) { return buffers_.alloc(size); }
  void free(std::uint64_t addr) { buffers_.free(addr); }
  void buf_write(std::uint64_t addr, std::size_t offset, std::span<const std::uint8_t> bytes) {
    buffers_.write(addr, offset, bytes);
  }
  std::vector<std::uint8_t> buf_read(std::uint64_t addr, std::size_t offset, std::size_t len) const {
    return buffers_.read(addr, offset, len);
  }
  BufferStore& buffers() { return buffers_; }
  const BufferStore& buffers() const { return buffers_; }

  std::optional<Micros> next_event_time() const;
  std::optional<ScheduleEvent> step();
  void run_until(Micros t);
  // Moves the clock forward without processing events; no event may be due before `t`.
  void advance_clock(Micros t);

  using Listener = std::function<void(const ScheduleEvent&, DeviceId)>;
  void set_listener(Listener listener) { listener_ = std::move(listener); }

  // Appends an externally generated event (job lifecycle) to the trace.
  void record(ScheduleEvent ev);
  std::vector<ScheduleEvent> trace() const;
  std::size_t reconfiguration_count() const { return reconfigurations_; }

 private:
  Fabric(ShellDescriptor shell, FabricConfig config);

  enum class Pending { reconfig_done, exec_done, adaptor_done };
  struct QueuedEvent {
    Micros t;
    int rank;
    int region;
    std::uint64_t seq;
    Pending what;
    DeviceId device;
    std::size_t adaptor_region;
    bool operator<(const QueuedEvent& o) const {
      return std::tie(t, rank, region, seq) < std::tie(o.t, o.rank, o.region, o.seq);
    }
  };

  struct Window {
    std::size_t region;
    bool bridge;
    std::uint32_t offset;
  };
  Window decode(std::uint64_t addr) const;
  DeviceInstance& hosted(std::size_t region);
  void start_device(DeviceInstance& dev);
  void complete_device(DeviceInstance& dev);
  void evict(DeviceId id);
  ScheduleEvent make_event(EventKind kind, const DeviceInstance* dev, Micros t) const;
  void emit(ScheduleEvent ev);
  void push(Micros t, EventKind kind, int region, Pending what, DeviceId dev, std::size_t adaptor);

  ShellDescriptor shell_;
  FabricConfig config_;
  TraceHeader header_;
  std::vector<Region> regions_;
  std::map<DeviceId, DeviceInstance> devices_;
  std::map<std::string, FunctionalModel, std::less<>> models_;
  std::set<QueuedEvent> queue_;
  BufferStore buffers_;
  std::vector<ScheduleEvent> log_;
  Listener listener_;
  Micros now_ = 0;
  Micros port_free_ = 0;
  DeviceId next_device_ = 1;
  std::uint64_t seq_ = 0;
  std::size_t reconfigurations_ = 0;
};

}  // namespace fos
