#pragma once

// Socket front end for the Service. Connection threads only read and
// frame; every request is executed by the single event-loop thread in
// arrival order, which also advances the virtual clock.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fos/service.hpp"
#include "fos/wire.hpp"

namespace fos {

struct DaemonOptions {
  wire::Endpoint endpoint;
  std::optional<wire::Endpoint> local_endpoint;  // extra path-based listener
  bool realtime = false;                         // pace virtual time by the wall clock
  std::filesystem::path trace_out;               // JSONL written at shutdown when set
};

class Daemon {
 public:
  Daemon(const ServiceConfig& config, DaemonOptions options);
  ~Daemon();
  Daemon(const Daemon&) = delete;
  Daemon& operator=(const Daemon&) = delete;

  // Binds and starts serving; throws on bind failure.
  void start();
  std::uint16_t port() const { return port_; }
  Micros startup_us() const { return service_.startup_us(); }
  // Blocks until a shutdown request or stop().
  void wait();
  void stop();

 private:
  struct Connection {
    int fd = -1;
    std::mutex write_mu;
    std::atomic<bool> open{true};
    void send(const std::string& body);
  };
  struct Command {
    enum class Kind { open, frame, close } kind;
    std::uint64_t session;
    std::string body;
  };

  void accept_loop(int listen_fd);
  void read_loop(std::uint64_t session, std::shared_ptr<Connection> conn);
  void event_loop();
  void post(Command cmd);
  void execute(const Command& cmd);
  Micros wall_virtual_now() const;

  Service service_;
  DaemonOptions options_;
  std::vector<int> listen_fds_;
  std::uint16_t port_ = 0;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Command> commands_;
  std::map<std::uint64_t, std::shared_ptr<Connection>> connections_;
  std::uint64_t next_session_ = 1;
  bool stopping_ = false;
  bool finished_ = false;
  std::condition_variable finished_cv_;

  std::vector<std::thread> acceptors_;
  std::vector<std::thread> readers_;
  std::thread loop_;
  std::chrono::steady_clock::time_point wall_origin_;
  Micros virtual_origin_ = 0;
};

}  // namespace fos
