#pragma once

// Protocol state machine of the multi-tenant daemon: sessions, buffer
// ownership, run tickets and streamed completions. Transport free; the
// daemon feeds it frames from one event-loop thread.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "fos/fabric.hpp"
#include "fos/registry.hpp"
#include "fos/scheduler.hpp"
#include "fos/wire.hpp"

namespace fos {

struct ServiceConfig {
  std::filesystem::path shell_file = "repo/shells/ultra96.json";
  std::filesystem::path repo_dir = "repo";
  std::string profile = "ultra96";
  SchedulerConfig scheduler{Policy::elastic, VariantRule::smallest, 0};
  Micros rpc_latency_us = 710;
  Micros server_init_us = 12200;
  Micros descriptor_parse_us = 2270;
};

class Service {
 public:
  explicit Service(const ServiceConfig& config);
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  using Sink = std::function<void(const std::string& body)>;
  void open_session(std::uint64_t session, Sink sink);
  // Discards queued jobs and frees buffers; dispatched jobs still finish.
  void close_session(std::uint64_t session);
  void handle(std::uint64_t session, std::string_view body);

  std::optional<Micros> next_time() const { return scheduler_->next_time(); }
  bool step() { return scheduler_->step(); }
  void run_until(Micros t) { scheduler_->run_until(t); }
  void drain() { scheduler_->run(); }

  bool stopping() const { return stopping_; }
  Micros now() const { return fabric_->now(); }
  Micros startup_us() const { return startup_us_; }
  std::size_t session_count() const { return sessions_.size(); }
  const Registry& registry() const { return registry_; }
  Fabric& fabric() { return *fabric_; }
  Scheduler& scheduler() { return *scheduler_; }

 private:
  struct PendingRun {
    wire::Json request_id;
    std::uint64_t session = 0;
    Micros received_us = 0;
    std::size_t done = 0;
    Micros latency_us = 0;
  };
  struct Session {
    Sink sink;
    std::string user;
    bool greeted = false;
    std::set<std::uint64_t> buffers;
  };

  void send(std::uint64_t session, const wire::Json& message);
  wire::Json dispatch(std::uint64_t session, Session& s, const wire::Json& req);
  wire::Json on_hello(std::uint64_t session, Session& s, const wire::Json& req);
  wire::Json on_run(std::uint64_t session, Session& s, const wire::Json& req);
  wire::Json on_status(const wire::Json& req);
  std::uint64_t owned_buffer(const Session& s, const wire::Json& req);
  void on_job_complete(const JobRecord& job);

  ServiceConfig config_;
  Registry registry_;
  std::unique_ptr<Fabric> fabric_;
  std::unique_ptr<Scheduler> scheduler_;
  std::map<std::uint64_t, Session> sessions_;
  std::map<std::uint64_t, std::uint64_t> buffer_owner_;
  std::map<std::uint64_t, PendingRun> runs_;  // by ticket
  Micros startup_us_ = 0;
  bool stopping_ = false;
};

}  // namespace fos
