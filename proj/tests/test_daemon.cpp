#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "fos/client.hpp"
#include "fos/daemon.hpp"
#include "support.hpp"

using namespace fos;
using wire::Json;

namespace {

ServiceConfig config() {
  ServiceConfig c;
  c.shell_file = testing::source_dir() / "repo" / "shells" / "ultra96.json";
  c.repo_dir = testing::source_dir() / "repo";
  return c;
}

struct Running {
  Daemon daemon;
  wire::Endpoint ep;

  explicit Running(DaemonOptions opts = {wire::Endpoint::parse("127.0.0.1:0"), {}, false, {}})
      : daemon(config(), opts) {
    daemon.start();
    ep = opts.endpoint;
    ep.port = daemon.port();
  }
  ~Running() {
    daemon.stop();
    daemon.wait();
  }
};

std::vector<std::uint8_t> ints(std::initializer_list<std::int32_t> xs) {
  std::vector<std::uint8_t> out(xs.size() * 4);
  std::size_t i = 0;
  for (std::int32_t x : xs) std::memcpy(out.data() + 4 * i++, &x, 4);
  return out;
}

Json raw_reply(int fd) {
  std::string body;
  REQUIRE(wire::read_frame(fd, body));
  return Json::parse(body);
}

}  // namespace

TEST_CASE("connecting to a dead endpoint fails") {
  CHECK_ERRC(Client::connect(wire::Endpoint::parse("unix:/tmp/fos_dead_endpoint.sock")), Errc::io);
  wire::Endpoint ep = wire::Endpoint::parse("127.0.0.1:0");
  int probe_fd = wire::listen_on(ep, &ep.port);
  ::close(probe_fd);
  CHECK_ERRC(Client::connect(ep), Errc::io);
}

TEST_CASE("hello and empty run") {
  Running d;
  CHECK(d.daemon.startup_us() == 35210);
  Client c = Client::connect(d.ep, "alice");
  CHECK(c.user() == "alice");
  CHECK(c.daemon_now_at_hello() == 35210);
  RunResult r = c.run({});
  CHECK(r.jobs.empty());
  CHECK(r.latency_us == 0);
  CHECK_ERRC(Client::connect(d.ep, "alice"), Errc::busy);
}

TEST_CASE("vadd end to end") {
  Running d;
  Client c = Client::connect(d.ep, "u");
  BufferHandle a = c.alloc(12), b = c.alloc(12), out = c.alloc(12);
  c.write(a.addr, 0, ints({1, 2, 3}));
  c.write(b.addr, 0, ints({10, 20, 30}));
  RunResult r = c.run({{"vadd", {{"a_op", a.addr}, {"b_op", b.addr}, {"c_out", out.addr}, {"length", 3}}}});
  CHECK(c.read(out.addr, 0, 12) == ints({11, 22, 33}));
  REQUIRE(r.jobs.size() == 1);
  const JobCompletion& j = r.jobs[0];
  CHECK(j.rpc_us == 710);
  CHECK(j.reconfig_us == 7620);
  CHECK(j.latency_us == j.rpc_us + j.queue_us + j.reconfig_us + j.exec_us);
  CHECK(j.latency_us == 710 + 7620 + 1012);
  CHECK(r.latency_us == j.latency_us);
  CHECK_ERRC(c.run({{"vadd", {{"z_op", 1}}}}), Errc::unknown_name);
  c.free(a.addr);
  CHECK_ERRC(c.read(a.addr, 0, 4), Errc::unknown_name);
}

TEST_CASE("client frames are byte exact") {
  Running d;
  Client c = Client::connect(d.ep, "alice");
  std::vector<std::string> frames;
  c.record_frames(&frames);
  c.status();
  c.run({{"vadd", {{"length", 3}, {"a_op", 0x10000000}}}});
  REQUIRE(frames.size() == 2);
  CHECK(frames[0] == std::string("\x00\x00\x00\x18", 4) + R"({"id":2,"type":"status"})");
  CHECK(frames[1] == std::string("\x00\x00\x00\x59", 4) +
                         R"({"id":3,"type":"run","jobs":[{"name":"vadd","params":{"a_op":"268435456","length":"3"}}]})");
}

TEST_CASE("run_async completes and streams each job") {
  Running d;
  Client c = Client::connect(d.ep, "u");
  RunHandle h = c.run_async(std::vector<wire::WireJob>(4, {"vadd", {}}));
  CHECK_ERRC(c.status(), Errc::busy);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  while (!h.poll() && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  REQUIRE(h.poll());
  RunResult r = h.wait();
  REQUIRE(r.jobs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r.jobs[i].index == i);
  CHECK(c.status()["ok"] == true);
}

TEST_CASE("malformed frame gets a protocol error and the connection survives") {
  Running d;
  int fd = wire::connect_to(d.ep);
  wire::write_all(fd, wire::encode(wire::hello_request(1, "raw")));
  CHECK(raw_reply(fd)["ok"] == true);
  wire::write_all(fd, wire::encode_body("{\"id\": 2, \"type\""));
  Json err = raw_reply(fd);
  CHECK(err["ok"] == false);
  CHECK(err["error"]["code"] == "protocol");
  wire::write_all(fd, wire::encode(wire::status_request(3)));
  Json st = raw_reply(fd);
  CHECK(st["id"] == 3);
  CHECK(st["ok"] == true);
  ::close(fd);
}

TEST_CASE("oversize frame closes the connection") {
  Running d;
  int fd = wire::connect_to(d.ep);
  wire::write_all(fd, std::string("\x7f\x00\x00\x00", 4));
  Json err = raw_reply(fd);
  CHECK(err["error"]["code"] == "protocol");
  std::string body;
  CHECK_FALSE(wire::read_frame(fd, body));
  ::close(fd);
  Client c = Client::connect(d.ep, "after");
  CHECK(c.status()["ok"] == true);
}

TEST_CASE("disconnect in the middle of a run") {
  Running d;
  {
    Client gone = Client::connect(d.ep, "gone");
    gone.alloc(64);
    gone.run_async(std::vector<wire::WireJob>(20, {"vadd", {}}));
  }
  Client c = Client::connect(d.ep, "stays");
  RunResult r = c.run({{"vadd", {}}});
  CHECK(r.jobs.size() == 1);
  Json st;
  for (int i = 0; i < 1000; ++i) {
    st = c.status();
    if (st["sessions"] == 1) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  CHECK(st["sessions"] == 1);
}

TEST_CASE("concurrent tenants") {
  Running d;
  std::vector<RunResult> results(3);
  std::vector<std::thread> threads;
  for (int u = 0; u < 3; ++u) {
    threads.emplace_back([&, u] {
      Client c = Client::connect(d.ep, "t" + std::to_string(u));
      results[u] = c.run(std::vector<wire::WireJob>(3, {"vadd", {}}));
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& r : results) {
    CHECK(r.jobs.size() == 3);
    for (const auto& j : r.jobs) CHECK(j.latency_us == j.rpc_us + j.queue_us + j.reconfig_us + j.exec_us);
  }
}

TEST_CASE("shutdown request stops the daemon and writes the trace") {
  auto out = std::filesystem::temp_directory_path() / "fos_daemon_trace.jsonl";
  std::filesystem::remove(out);
  auto sock = std::filesystem::temp_directory_path() / "fos_daemon_test.sock";
  DaemonOptions opts{wire::Endpoint::parse("127.0.0.1:0"), wire::Endpoint::parse("unix:" + sock.string()), false,
                     out};
  Daemon daemon(config(), opts);
  daemon.start();
  std::string trace;
  {
    Client c = Client::connect(*opts.local_endpoint, "u");
    c.run({{"vadd", {}}});
    trace = c.trace();
    c.shutdown();
  }
  daemon.wait();
  std::ifstream in(out, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK_FALSE(trace.empty());
  CHECK(ss.str() == trace);
  CHECK_FALSE(std::filesystem::exists(sock));
  std::filesystem::remove(out);
}
