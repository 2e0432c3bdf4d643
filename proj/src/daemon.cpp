#include "fos/daemon.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <fstream>

namespace fos {

void Daemon::Connection::send(const std::string& body) {
  std::lock_guard<std::mutex> lk(write_mu);
  if (!open) return;
  try {
    wire::write_all(fd, wire::encode_body(body));
  } catch (const Error&) {
    open = false;
  }
}

Daemon::Daemon(const ServiceConfig& config, DaemonOptions options)
    : service_(config), options_(std::move(options)) {}

Daemon::~Daemon() {
  stop();
  wait();
}

void Daemon::start() {
  listen_fds_.push_back(wire::listen_on(options_.endpoint, &port_));
  if (options_.local_endpoint) listen_fds_.push_back(wire::listen_on(*options_.local_endpoint));
  wall_origin_ = std::chrono::steady_clock::now();
  virtual_origin_ = service_.now();
  loop_ = std::thread([this] { event_loop(); });
  for (int fd : listen_fds_) acceptors_.emplace_back([this, fd] { accept_loop(fd); });
}

void Daemon::post(Command cmd) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    commands_.push_back(std::move(cmd));
  }
  cv_.notify_all();
}

void Daemon::accept_loop(int listen_fd) {
  for (;;) {
    int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard<std::mutex> lk(mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    std::uint64_t session = next_session_++;
    connections_[session] = conn;
    commands_.push_back({Command::Kind::open, session, {}});
    cv_.notify_all();
    readers_.emplace_back([this, session, conn] { read_loop(session, conn); });
  }
}

void Daemon::read_loop(std::uint64_t session, std::shared_ptr<Connection> conn) {
  std::string body;
  try {
    while (wire::read_frame(conn->fd, body)) post({Command::Kind::frame, session, body});
  } catch (const Error& e) {
    if (e.code() == Errc::protocol) {
      conn->send(wire::error_reply(nullptr, "error", Errc::protocol, e.what()).dump());
    }
  }
  post({Command::Kind::close, session, {}});
}

Micros Daemon::wall_virtual_now() const {
  auto elapsed = std::chrono::steady_clock::now() - wall_origin_;
  return virtual_origin_ + std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count();
}

void Daemon::execute(const Command& cmd) {
  switch (cmd.kind) {
    case Command::Kind::open: {
      std::weak_ptr<Connection> weak;
      {
        std::lock_guard<std::mutex> lk(mu_);
        weak = connections_[cmd.session];
      }
      service_.open_session(cmd.session, [weak](const std::string& body) {
        if (auto c = weak.lock()) c->send(body);
      });
      break;
    }
    case Command::Kind::frame:
      service_.handle(cmd.session, cmd.body);
      break;
    case Command::Kind::close: {
      service_.close_session(cmd.session);
      std::shared_ptr<Connection> conn;
      {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = connections_.find(cmd.session);
        if (it != connections_.end()) {
          conn = it->second;
          connections_.erase(it);
        }
      }
      if (conn) {
        std::lock_guard<std::mutex> wl(conn->write_mu);
        conn->open = false;
        ::close(conn->fd);
      }
      break;
    }
  }
}

void Daemon::event_loop() {
  std::unique_lock<std::mutex> lk(mu_);
  for (;;) {
    if (stopping_) break;
    if (!commands_.empty()) {
      std::deque<Command> batch;
      batch.swap(commands_);
      lk.unlock();
      for (const auto& cmd : batch) {
        if (options_.realtime) service_.run_until(std::max(service_.now(), wall_virtual_now()));
        execute(cmd);
      }
      lk.lock();
      if (service_.stopping()) stopping_ = true;
      continue;
    }
    auto next = service_.next_time();
    if (!next) {
      cv_.wait(lk, [&] { return stopping_ || !commands_.empty(); });
      continue;
    }
    if (options_.realtime) {
      auto deadline = wall_origin_ + std::chrono::microseconds(*next - virtual_origin_);
      if (cv_.wait_until(lk, deadline, [&] { return stopping_ || !commands_.empty(); })) continue;
    }
    lk.unlock();
    service_.step();
    lk.lock();
  }
  lk.unlock();

  if (!options_.trace_out.empty()) {
    std::ofstream out(options_.trace_out, std::ios::binary);
    out << to_jsonl(service_.scheduler().trace());
  }
  for (int fd : listen_fds_) ::shutdown(fd, SHUT_RDWR);
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard<std::mutex> g(mu_);
    for (auto& [id, c] : connections_) conns.push_back(c);
  }
  for (auto& c : conns) ::shutdown(c->fd, SHUT_RDWR);

  std::lock_guard<std::mutex> g(mu_);
  finished_ = true;
  finished_cv_.notify_all();
}

void Daemon::stop() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
}

void Daemon::wait() {
  if (!loop_.joinable()) return;
  {
    std::unique_lock<std::mutex> lk(mu_);
    finished_cv_.wait(lk, [&] { return finished_; });
  }
  loop_.join();
  for (auto& t : acceptors_) t.join();
  acceptors_.clear();
  std::vector<std::thread> readers;
  {
    std::lock_guard<std::mutex> lk(mu_);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
  for (int fd : listen_fds_) ::close(fd);
  listen_fds_.clear();
  std::lock_guard<std::mutex> lk(mu_);
  for (auto& [id, c] : connections_) ::close(c->fd);
  connections_.clear();
  if (options_.local_endpoint) ::unlink(options_.local_endpoint->path.c_str());
}

}  // namespace fos
