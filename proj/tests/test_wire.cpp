#include <sys/socket.h>
#include <unistd.h>

#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "fos/wire.hpp"
#include "support.hpp"

using namespace fos;
using namespace fos::wire;

TEST_CASE("golden request frames") {
  std::string hello = encode(hello_request(1, "alice"));
  CHECK(hello == std::string("\x00\x00\x00\x32", 4) + R"({"id":1,"type":"hello","version":1,"user":"alice"})");

  WireJob job{"vadd", {{"length", 3}, {"a_op", 0x10000000}}};
  std::string run = encode(run_request(7, {job}));
  CHECK(run == std::string("\x00\x00\x00\x59", 4) +
                   R"({"id":7,"type":"run","jobs":[{"name":"vadd","params":{"a_op":"268435456","length":"3"}}]})");

  CHECK(alloc_request(2, 4096).dump() == R"({"id":2,"type":"alloc","size":4096})");
  CHECK(free_request(3, 0x10000000).dump() == R"({"id":3,"type":"free","addr":268435456})");
  CHECK(buf_write_request(4, 0x10000000, 8, {1, 0xab, 0}).dump() ==
        R"({"id":4,"type":"buf_write","addr":268435456,"offset":8,"data":"01ab00"})");
  CHECK(buf_read_request(5, 0x10000000, 0, 12).dump() ==
        R"({"id":5,"type":"buf_read","addr":268435456,"offset":0,"len":12})");
  CHECK(status_request(6).dump() == R"({"id":6,"type":"status"})");
  CHECK(trace_request(8).dump() == R"({"id":8,"type":"trace"})");
  CHECK(shutdown_request(9).dump() == R"({"id":9,"type":"shutdown"})");
  CHECK(run_request(10, {}).dump() == R"({"id":10,"type":"run","jobs":[]})");
  CHECK(error_reply(4, "alloc", Errc::ownership, "nope").dump() ==
        R"({"id":4,"type":"alloc","ok":false,"error":{"code":"ownership","message":"nope"}})");
}

TEST_CASE("frame length is big-endian") {
  std::string body(0x01020304 % 70000, 'x');
  std::string f = encode_body(body);
  auto n = body.size();
  CHECK(static_cast<unsigned char>(f[0]) == ((n >> 24) & 0xff));
  CHECK(static_cast<unsigned char>(f[1]) == ((n >> 16) & 0xff));
  CHECK(static_cast<unsigned char>(f[2]) == ((n >> 8) & 0xff));
  CHECK(static_cast<unsigned char>(f[3]) == (n & 0xff));
  CHECK(encode_body("") == std::string(4, '\0'));
}

TEST_CASE("incremental decoding") {
  std::string stream = encode_body("first") + encode_body("") + encode_body("third!");
  FrameDecoder d;
  std::vector<std::string> out;
  for (char c : stream) {
    d.feed(&c, 1);
    while (auto f = d.next()) out.push_back(*f);
  }
  CHECK(out == std::vector<std::string>{"first", "", "third!"});
  CHECK(d.buffered() == 0);

  FrameDecoder big;
  std::string hdr("\x01\x00\x00\x01", 4);  // 16 MiB + 1
  big.feed(hdr.data(), hdr.size());
  CHECK_ERRC(big.next(), Errc::protocol);
}

TEST_CASE("endpoint parsing") {
  Endpoint a = Endpoint::parse("127.0.0.1:7900");
  CHECK(a.kind == Endpoint::Kind::tcp);
  CHECK(a.host == "127.0.0.1");
  CHECK(a.port == 7900);
  CHECK(Endpoint::parse("tcp://10.0.0.2:81").host == "10.0.0.2");
  CHECK(Endpoint::parse(":1234").host == "127.0.0.1");
  Endpoint u = Endpoint::parse("unix:/tmp/fos.sock");
  CHECK(u.kind == Endpoint::Kind::local);
  CHECK(u.path == "/tmp/fos.sock");
  CHECK(u.str() == "unix:/tmp/fos.sock");
  CHECK(a.str() == "127.0.0.1:7900");
  CHECK_ERRC(Endpoint::parse("localhost"), Errc::invalid);
  CHECK_ERRC(Endpoint::parse("h:99999"), Errc::invalid);
  CHECK_ERRC(Endpoint::parse("h:x"), Errc::invalid);
  CHECK_ERRC(Endpoint::parse("unix:"), Errc::invalid);

  ::unsetenv("FOS_ENDPOINT");
  CHECK(Endpoint::from_env().str() == "127.0.0.1:7900");
  ::setenv("FOS_ENDPOINT", "127.0.0.1:9001", 1);
  CHECK(Endpoint::from_env().port == 9001);
  ::unsetenv("FOS_ENDPOINT");
}

TEST_CASE("params accept decimal and hex") {
  CHECK(param_from_json(Json(42)) == 42u);
  CHECK(param_from_json(Json("42")) == 42u);
  CHECK(param_from_json(Json("0x2a")) == 42u);
  CHECK(param_from_json(Json("0x10000000")) == param_from_json(Json("268435456")));
  CHECK_ERRC(param_from_json(Json(-1)), Errc::invalid);
  CHECK_ERRC(param_from_json(Json("ten")), Errc::invalid);
  CHECK_ERRC(param_from_json(Json(1.5)), Errc::invalid);
}

TEST_CASE("hex data") {
  std::vector<std::uint8_t> bytes{0, 1, 0x7f, 0x80, 0xff};
  CHECK(to_hex_bytes(bytes) == "00017f80ff");
  CHECK(from_hex_bytes("00017F80ff") == bytes);
  CHECK_ERRC(from_hex_bytes("abc"), Errc::parse);
  CHECK_ERRC(from_hex_bytes("zz"), Errc::parse);
}

TEST_CASE("socket round trip") {
  for (bool local : {false, true}) {
    Endpoint ep = local ? Endpoint::parse("unix:/tmp/fos_wire_test.sock") : Endpoint::parse("127.0.0.1:0");
    std::uint16_t port = 0;
    int lfd = listen_on(ep, &port);
    if (!local) {
      CHECK(port != 0);
      ep.port = port;
    }
    std::thread server([lfd] {
      int fd = ::accept(lfd, nullptr, nullptr);
      std::string body;
      while (read_frame(fd, body)) write_all(fd, encode_body("echo:" + body));
      ::close(fd);
    });
    int fd = connect_to(ep);
    write_all(fd, encode(status_request(1)));
    std::string reply;
    REQUIRE(read_frame(fd, reply));
    CHECK(reply == R"(echo:{"id":1,"type":"status"})");
    ::shutdown(fd, SHUT_WR);
    CHECK_FALSE(read_frame(fd, reply));
    ::close(fd);
    server.join();
    ::close(lfd);
    if (local) ::unlink(ep.path.c_str());
  }
  CHECK_ERRC(connect_to(Endpoint::parse("unix:/tmp/fos_no_such.sock")), Errc::io);
}
