#include "fos/client.hpp"

#include <poll.h>
#include <unistd.h>

#include <algorithm>

namespace fos {

using wire::Json;

void check_reply(const Json& reply) {
  if (reply.value("ok", false)) return;
  std::string code = "protocol";
  std::string message = "daemon reported an error";
  if (auto e = reply.find("error"); e != reply.end() && e->is_object()) {
    code = e->value("code", code);
    message = e->value("message", message);
  }
  throw Error(errc_from_name(code), message);
}

Client Client::connect(const wire::Endpoint& endpoint, const std::string& user) {
  Client c(wire::connect_to(endpoint));
  Json reply = c.call(wire::hello_request(c.next_id_++, user));
  if (reply.value("version", 0) != wire::kProtocolVersion) {
    throw Error(Errc::protocol, "daemon protocol version mismatch");
  }
  c.user_ = reply.value("user", std::string());
  c.session_ = reply.value("session", std::uint64_t{0});
  c.hello_now_ = reply.value("now_us", Micros{0});
  return c;
}

Client::Client(Client&& other) noexcept { *this = std::move(other); }

Client& Client::operator=(Client&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    next_id_ = other.next_id_;
    user_ = std::move(other.user_);
    session_ = other.session_;
    hello_now_ = other.hello_now_;
    run_in_flight_ = other.run_in_flight_;
    recorder_ = other.recorder_;
    other.fd_ = -1;
  }
  return *this;
}

Client::~Client() { close(); }

void Client::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

std::uint64_t Client::send(Json request) {
  if (fd_ < 0) throw Error(Errc::io, "client is not connected");
  std::string frame = wire::encode(request);
  if (recorder_) recorder_->push_back(frame);
  wire::write_all(fd_, frame);
  return request.value("id", std::uint64_t{0});
}

Json Client::receive() {
  std::string body;
  if (!wire::read_frame(fd_, body)) throw Error(Errc::io, "daemon closed the connection");
  try {
    return Json::parse(body);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::protocol, std::string("malformed reply: ") + e.what());
  }
}

std::optional<Json> Client::try_receive() {
  pollfd p{fd_, POLLIN, 0};
  if (::poll(&p, 1, 0) <= 0) return std::nullopt;
  return receive();
}

Json Client::call(Json request) {
  if (run_in_flight_) throw Error(Errc::busy, "a run is still in flight on this connection");
  std::uint64_t id = send(std::move(request));
  for (;;) {
    Json reply = receive();
    Json rid = reply.value("id", Json(nullptr));
    if (rid == Json(id) || rid.is_null()) {
      check_reply(reply);
      return reply;
    }
  }
}

BufferHandle Client::alloc(std::size_t size) {
  Json r = call(wire::alloc_request(next_id_++, size));
  return {r.at("addr").get<std::uint64_t>(), r.at("size").get<std::size_t>()};
}

void Client::free(std::uint64_t addr) { call(wire::free_request(next_id_++, addr)); }

void Client::write(std::uint64_t addr, std::size_t offset, const std::vector<std::uint8_t>& bytes) {
  call(wire::buf_write_request(next_id_++, addr, offset, bytes));
}

std::vector<std::uint8_t> Client::read(std::uint64_t addr, std::size_t offset, std::size_t len) {
  Json r = call(wire::buf_read_request(next_id_++, addr, offset, len));
  return wire::from_hex_bytes(r.at("data").get<std::string>());
}

RunHandle Client::run_async(const std::vector<wire::WireJob>& jobs) {
  if (run_in_flight_) throw Error(Errc::busy, "a run is still in flight on this connection");
  std::uint64_t id = send(wire::run_request(next_id_++, jobs));
  run_in_flight_ = true;
  return RunHandle(this, id);
}

RunResult Client::run(const std::vector<wire::WireJob>& jobs) { return run_async(jobs).wait(); }

Json Client::status() { return call(wire::status_request(next_id_++)); }

std::string Client::trace() {
  return call(wire::trace_request(next_id_++)).at("jsonl").get<std::string>();
}

void Client::shutdown() { call(wire::shutdown_request(next_id_++)); }

bool RunHandle::consume(const Json& msg) {
  Json id = msg.value("id", Json(nullptr));
  if (!id.is_null() && id != Json(id_)) return false;
  std::string type = msg.value("type", std::string());
  if (type == "job_done") {
    JobCompletion c;
    c.index = msg.at("index").get<std::size_t>();
    c.job = msg.at("job").get<std::int64_t>();
    c.latency_us = msg.at("latency_us").get<Micros>();
    c.rpc_us = msg.value("rpc_us", Micros{0});
    c.queue_us = msg.value("queue_us", Micros{0});
    c.reconfig_us = msg.value("reconfig_us", Micros{0});
    c.exec_us = msg.value("exec_us", Micros{0});
    c.regions = msg.value("regions", std::vector<std::string>{});
    c.variant = msg.value("variant", std::string());
    received_.push_back(std::move(c));
    return false;
  }
  client_->run_in_flight_ = false;
  check_reply(msg);
  RunResult r;
  r.ticket = msg.value("ticket", std::uint64_t{0});
  r.latency_us = msg.value("latency_us", Micros{0});
  r.jobs = received_;
  std::sort(r.jobs.begin(), r.jobs.end(),
            [](const JobCompletion& a, const JobCompletion& b) { return a.index < b.index; });
  result_ = std::move(r);
  return true;
}

bool RunHandle::poll() {
  while (!result_) {
    auto msg = client_->try_receive();
    if (!msg) break;
    consume(*msg);
  }
  return result_.has_value();
}

RunResult RunHandle::wait() {
  while (!result_) consume(client_->receive());
  return *result_;
}

}  // namespace fos
