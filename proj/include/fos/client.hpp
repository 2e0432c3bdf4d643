#pragma once

// Client library for the daemon. One request in flight per connection;
// use one Client per simulated tenant for parallelism.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fos/fabric.hpp"
#include "fos/wire.hpp"

namespace fos {

struct JobCompletion {
  std::size_t index = 0;
  std::int64_t job = -1;
  Micros latency_us = 0;
  Micros rpc_us = 0;
  Micros queue_us = 0;
  Micros reconfig_us = 0;
  Micros exec_us = 0;
  std::vector<std::string> regions;
  std::string variant;
};

struct RunResult {
  std::uint64_t ticket = 0;
  std::vector<JobCompletion> jobs;  // in submission order
  Micros latency_us = 0;            // of the slowest job
};

class Client;

// Poller for a run issued with Client::run_async.
class RunHandle {
 public:
  // Consumes any frames already received; true once the run has finished.
  bool poll();
  RunResult wait();
  const std::vector<JobCompletion>& completed() const { return received_; }

 private:
  friend class Client;
  RunHandle(Client* client, std::uint64_t id) : client_(client), id_(id) {}
  bool consume(const wire::Json& msg);

  Client* client_;
  std::uint64_t id_;
  std::vector<JobCompletion> received_;
  std::optional<RunResult> result_;
};

class Client {
 public:
  // Connects and performs the hello exchange; an empty user lets the daemon pick one.
  static Client connect(const wire::Endpoint& endpoint, const std::string& user = "");
  Client(Client&& other) noexcept;
  Client& operator=(Client&& other) noexcept;
  ~Client();

  const std::string& user() const { return user_; }
  std::uint64_t session() const { return session_; }
  Micros daemon_now_at_hello() const { return hello_now_; }

  BufferHandle alloc(std::size_t size);
  void free(std::uint64_t addr);
  void write(std::uint64_t addr, std::size_t offset, const std::vector<std::uint8_t>& bytes);
  std::vector<std::uint8_t> read(std::uint64_t addr, std::size_t offset, std::size_t len);

  RunResult run(const std::vector<wire::WireJob>& jobs);
  RunHandle run_async(const std::vector<wire::WireJob>& jobs);

  wire::Json status();
  std::string trace();
  void shutdown();

  // Every frame written by this client is appended here while set.
  void record_frames(std::vector<std::string>* sink) { recorder_ = sink; }

 private:
  friend class RunHandle;
  explicit Client(int fd) : fd_(fd) {}
  std::uint64_t send(wire::Json request);
  wire::Json receive();
  std::optional<wire::Json> try_receive();
  wire::Json call(wire::Json request);
  void close();

  int fd_ = -1;
  std::uint64_t next_id_ = 1;
  std::string user_;
  std::uint64_t session_ = 0;
  Micros hello_now_ = 0;
  bool run_in_flight_ = false;
  std::vector<std::string>* recorder_ = nullptr;
};

// Raises the daemon's error reply as fos::Error.
void check_reply(const wire::Json& reply);

}  // namespace fos
