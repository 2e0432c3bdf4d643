#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fos/service.hpp"
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

struct Harness {
  Service svc;
  std::map<std::uint64_t, std::vector<Json>> inbox;

  explicit Harness(const ServiceConfig& c = config()) : svc(c) {}

  void open(std::uint64_t s) {
    svc.open_session(s, [this, s](const std::string& body) { inbox[s].push_back(Json::parse(body)); });
  }
  Json call(std::uint64_t s, const Json& req) {
    std::size_t before = inbox[s].size();
    svc.handle(s, req.dump());
    REQUIRE(inbox[s].size() == before + 1);
    return inbox[s].back();
  }
  Json greet(std::uint64_t s, const std::string& user) {
    open(s);
    return call(s, wire::hello_request(1, user));
  }
};

std::string ints_hex(std::initializer_list<std::int32_t> xs) {
  std::vector<std::uint8_t> out(xs.size() * 4);
  std::size_t i = 0;
  for (std::int32_t x : xs) std::memcpy(out.data() + 4 * i++, &x, 4);
  return wire::to_hex_bytes(out);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "accels");
  return dir;
}

}  // namespace

TEST_CASE("startup state") {
  Harness h;
  CHECK(h.svc.startup_us() == 20740 + 12200 + 2270);
  CHECK(h.svc.startup_us() == 35210);
  h.greet(1, "alice");
  Json st = h.call(1, wire::status_request(2));
  CHECK(st["ok"] == true);
  CHECK(st["regions"].size() == 3);
  CHECK(st["accelerators"] == Json::array({"vadd"}));
  CHECK(st["now_us"] == 35210);
  CHECK(st["profile"] == "ultra96");
  for (const auto& r : st["regions"]) CHECK(r["state"] == "blank");
}

TEST_CASE("empty and broken repositories") {
  auto empty = scratch("fos_service_empty");
  ServiceConfig c = config();
  c.repo_dir = empty;
  Harness h(c);
  h.greet(1, "u");
  CHECK(h.call(1, wire::status_request(2))["accelerators"].empty());
  Json r = h.call(1, wire::run_request(3, {{"vadd", {}}}));
  CHECK(r["ok"] == false);
  CHECK(r["error"]["code"] == "unknown_name");

  std::ofstream(empty / "accels" / "bad.json") << "[1,";
  try {
    Service s(c);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse);
    CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
  }
  std::filesystem::remove_all(empty);
}

TEST_CASE("hello rules") {
  Harness h;
  h.open(1);
  Json r = h.call(1, wire::status_request(5));
  CHECK(r["ok"] == false);
  CHECK(r["id"] == 5);
  CHECK(r["error"]["code"] == "protocol");

  Json bad = wire::hello_request(6, "alice");
  bad["version"] = 2;
  CHECK(h.call(1, bad)["error"]["code"] == "protocol");

  Json ok = h.call(1, wire::hello_request(7, "alice"));
  CHECK(ok["ok"] == true);
  CHECK(ok["user"] == "alice");
  CHECK(ok["session"] == 1);
  CHECK(h.call(1, wire::hello_request(8, "alice"))["error"]["code"] == "protocol");

  Json dup = h.greet(2, "alice");
  CHECK(dup["ok"] == false);
  CHECK(dup["error"]["code"] == "busy");
  CHECK(h.call(2, wire::hello_request(9, "bob"))["ok"] == true);

  Json anon = h.greet(3, "");
  CHECK(anon["user"] == "user3");
}

TEST_CASE("malformed requests keep the session usable") {
  Harness h;
  h.greet(1, "u");
  h.svc.handle(1, "{not json");
  REQUIRE(h.inbox[1].size() == 2);
  CHECK(h.inbox[1].back()["error"]["code"] == "protocol");
  CHECK(h.inbox[1].back()["id"].is_null());
  CHECK(h.call(1, Json{{"id", 3}})["error"]["code"] == "protocol");
  CHECK(h.call(1, Json{{"id", 4}, {"type", "teleport"}})["error"]["code"] == "protocol");
  CHECK(h.call(1, Json{{"id", 5}, {"type", "alloc"}})["error"]["code"] == "protocol");
  CHECK(h.call(1, wire::status_request(6))["ok"] == true);
}

TEST_CASE("run latency is rpc plus reconfiguration plus execution") {
  Harness h;
  h.greet(1, "alice");
  h.svc.handle(1, wire::run_request(2, {{"vadd", {{"length", 0}}}}).dump());
  CHECK(h.inbox[1].size() == 1);  // nothing until the job completes
  h.svc.drain();
  REQUIRE(h.inbox[1].size() == 3);
  Json done = h.inbox[1][1];
  Json fin = h.inbox[1][2];
  CHECK(done["type"] == "job_done");
  CHECK(done["id"] == 2);
  CHECK(done["index"] == 0);
  CHECK(done["rpc_us"] == 710);
  CHECK(done["reconfig_us"] == 7620);
  // 2000/2 compute plus 12288 bytes at 1060 B/us
  CHECK(done["exec_us"] == 1012);
  CHECK(done["queue_us"] == 0);
  CHECK(done["latency_us"] == 710 + 7620 + 1012);
  CHECK(done["regions"] == Json::array({"pr0", "pr1"}));
  CHECK(done["variant"] == "vadd_2slot.bin");
  CHECK(fin["type"] == "run");
  CHECK(fin["ok"] == true);
  CHECK(fin["jobs"] == 1);
  CHECK(fin["latency_us"] == 9342);
  CHECK(h.svc.now() == 35210 + 9342);
}

TEST_CASE("a second session reuses the loaded function") {
  Harness h;
  h.greet(1, "alice");
  h.greet(2, "bob");
  h.svc.handle(1, wire::run_request(2, {{"vadd", {}}}).dump());
  h.svc.drain();
  h.svc.handle(2, wire::run_request(2, {{"vadd", {}}}).dump());
  h.svc.drain();
  REQUIRE(h.inbox[2].size() == 3);
  CHECK(h.inbox[1][1]["reconfig_us"] == 7620);
  CHECK(h.inbox[2][1]["reconfig_us"] == 0);
  CHECK(h.inbox[2][1]["latency_us"] == 710 + 1012);
  CHECK(h.call(1, wire::status_request(9))["reconfigurations"] == 1);
}

TEST_CASE("unknown parameter leaves no trace") {
  Harness h;
  h.greet(1, "u");
  auto before = h.svc.scheduler().trace().size();
  Json r = h.call(1, wire::run_request(2, {{"vadd", {{"z_op", 1}}}}));
  CHECK(r["ok"] == false);
  CHECK(r["error"]["code"] == "unknown_name");
  CHECK(h.svc.scheduler().trace().size() == before);
  CHECK_FALSE(h.svc.next_time().has_value());
  CHECK(h.svc.now() == 35210);
}

TEST_CASE("empty run completes immediately") {
  Harness h;
  h.greet(1, "u");
  Json r = h.call(1, wire::run_request(2, {}));
  CHECK(r["ok"] == true);
  CHECK(r["jobs"] == 0);
  CHECK(r["latency_us"] == 0);
}

TEST_CASE("buffers are owned by their session") {
  Harness h;
  h.greet(1, "alice");
  h.greet(2, "bob");
  Json a = h.call(1, wire::alloc_request(2, 100));
  REQUIRE(a["ok"] == true);
  std::uint64_t addr = a["addr"];
  CHECK(addr >= 0x10000000u);
  CHECK(addr % 4096 == 0);
  Json b = h.call(1, wire::alloc_request(3, 1));
  CHECK(b["addr"].get<std::uint64_t>() % 4096 == 0);
  CHECK(b["addr"] != a["addr"]);

  Json w = h.call(1, wire::buf_write_request(4, addr, 4, {9, 8, 7}));
  CHECK(w["written"] == 3);
  CHECK(h.call(1, wire::buf_read_request(5, addr, 4, 3))["data"] == "090807");

  CHECK(h.call(2, wire::buf_read_request(6, addr, 0, 4))["error"]["code"] == "ownership");
  CHECK(h.call(2, wire::free_request(7, addr))["error"]["code"] == "ownership");
  CHECK(h.call(1, wire::buf_read_request(8, addr, 98, 4))["error"]["code"] == "out_of_range");
  CHECK(h.call(1, wire::free_request(9, addr))["ok"] == true);
  CHECK(h.call(1, wire::free_request(10, addr))["error"]["code"] == "unknown_name");

  std::uint64_t kept = b["addr"];
  h.svc.close_session(1);
  h.greet(3, "carol");
  CHECK(h.call(3, wire::buf_read_request(11, kept, 0, 1))["error"]["code"] == "unknown_name");
}

TEST_CASE("vadd through the service") {
  Harness h;
  h.greet(1, "u");
  auto alloc = [&](int id) { return h.call(1, wire::alloc_request(id, 12))["addr"].get<std::uint64_t>(); };
  std::uint64_t a = alloc(2), b = alloc(3), c = alloc(4);
  h.call(1, Json{{"id", 5}, {"type", "buf_write"}, {"addr", a}, {"data", ints_hex({1, 2, 3})}});
  h.call(1, Json{{"id", 6}, {"type", "buf_write"}, {"addr", b}, {"data", ints_hex({10, 20, 30})}});
  h.svc.handle(1, wire::run_request(7, {{"vadd", {{"a_op", a}, {"b_op", b}, {"c_out", c}, {"length", 3}}}}).dump());
  h.svc.drain();
  CHECK(h.inbox[1].back()["ok"] == true);
  CHECK(h.call(1, wire::buf_read_request(8, c, 0, 12))["data"] == ints_hex({11, 22, 33}));
}

TEST_CASE("multi-job run streams one completion per job") {
  Harness h;
  h.greet(1, "u");
  h.svc.handle(1, wire::run_request(2, {{"vadd", {}}, {"vadd", {}}, {"vadd", {}}}).dump());
  h.svc.drain();
  REQUIRE(h.inbox[1].size() == 5);
  std::set<int> indices;
  Micros slowest = 0;
  for (int i = 1; i <= 3; ++i) {
    CHECK(h.inbox[1][i]["type"] == "job_done");
    CHECK(h.inbox[1][i]["id"] == 2);
    indices.insert(h.inbox[1][i]["index"].get<int>());
    slowest = std::max(slowest, h.inbox[1][i]["latency_us"].get<Micros>());
  }
  CHECK(indices == std::set<int>{0, 1, 2});
  CHECK(h.inbox[1][4]["jobs"] == 3);
  CHECK(h.inbox[1][4]["latency_us"] == slowest);
}

TEST_CASE("closing a session drops its queued work") {
  Harness h;
  h.greet(1, "alice");
  h.greet(2, "bob");
  h.svc.handle(1, wire::run_request(2, std::vector<wire::WireJob>(6, {"vadd", {}})).dump());
  h.svc.handle(2, wire::run_request(2, {{"vadd", {}}}).dump());
  h.svc.run_until(35210 + 710);
  h.svc.close_session(1);
  h.svc.drain();
  CHECK(h.inbox[2].back()["type"] == "run");
  CHECK(h.inbox[2].back()["ok"] == true);
  std::size_t alice_done = 0;
  for (const auto& ev : h.svc.scheduler().trace()) alice_done += ev.kind == EventKind::exec_done && ev.user == "alice";
  CHECK(alice_done < 6);
  CHECK(h.svc.session_count() == 1);
}

TEST_CASE("trace and shutdown requests") {
  Harness h;
  h.greet(1, "u");
  h.svc.handle(1, wire::run_request(2, {{"vadd", {}}}).dump());
  h.svc.drain();
  Json t = h.call(1, wire::trace_request(3));
  CHECK(t["events"].get<std::size_t>() >= 6);
  CHECK(t["jsonl"] == to_jsonl(h.svc.scheduler().trace()));
  CHECK_FALSE(h.svc.stopping());
  CHECK(h.call(1, wire::shutdown_request(4))["ok"] == true);
  CHECK(h.svc.stopping());
}
