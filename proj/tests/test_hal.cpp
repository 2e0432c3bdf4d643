#include <cstring>

#include "doctest.h"
#include "fos/hal.hpp"
#include "support.hpp"

using namespace fos;

namespace {

struct Board {
  Registry registry;
  Fabric fabric;
  Hal hal;

  Board()
      : registry(load()),
        fabric(Fabric::load_shell(registry.shell("Ultra96_100MHz_2"), FabricConfig::for_profile("ultra96"))),
        hal(fabric, registry) {
    fabric.register_model("vadd", vadd_model());
  }

  static Registry load() {
    Registry r;
    r.load_directory(testing::source_dir() / "repo");
    return r;
  }

  std::size_t reconfig_events() const {
    std::size_t n = 0;
    for (const auto& ev : fabric.trace()) n += ev.kind == EventKind::reconfig_start;
    return n;
  }
};

std::vector<std::uint8_t> ints(std::initializer_list<std::int32_t> xs) {
  std::vector<std::uint8_t> out(xs.size() * 4);
  std::size_t i = 0;
  for (std::int32_t x : xs) std::memcpy(out.data() + 4 * i++, &x, 4);
  return out;
}

}  // namespace

TEST_CASE("load_partial prefers the widest variant and reuses idle instances") {
  Board b;
  AccelHandle h = b.hal.load_partial("vadd");
  CHECK(h.regions == std::vector<std::size_t>{0, 1});
  CHECK(h.base == 0xa0000000u);
  CHECK(b.fabric.device(h.device).variant.name == "vadd_2slot.bin");
  CHECK(b.reconfig_events() == 1);

  AccelHandle again = b.hal.load_partial("vadd");
  CHECK(again.device == h.device);
  CHECK(again.regions == h.regions);
  CHECK(b.reconfig_events() == 1);
  CHECK_ERRC(b.hal.load_partial("missing"), Errc::unknown_name);
}

TEST_CASE("load_partial without capacity") {
  Board b;
  AccelHandle big = b.hal.load_partial("vadd");
  b.hal.start(big);
  // The 1-slot variant still fits pr2. Loading blocks in virtual time, so
  // big finishes while the port is busy.
  AccelHandle small = b.hal.load_partial("vadd");
  CHECK(small.regions == std::vector<std::size_t>{2});
  CHECK_FALSE(b.fabric.device(big.device).running());
  b.hal.start(big);
  b.hal.start(small);
  CHECK_ERRC(b.hal.load_partial("vadd"), Errc::no_capacity);
  CHECK_ERRC(b.hal.start(big), Errc::busy);
}

TEST_CASE("set_arg splits 64-bit values into two words") {
  Board b;
  AccelHandle h = b.hal.load_partial("vadd");
  std::uint64_t value = 0x100000010ull;
  b.hal.set_arg(h, "a_op", value);
  std::uint32_t lo = static_cast<std::uint32_t>(value & 0xffffffffu);
  std::uint32_t hi = static_cast<std::uint32_t>(value >> 32);
  CHECK(lo == 0x00000010u);
  CHECK(hi == 0x00000001u);
  CHECK(b.fabric.mmio_read(h.base + 0x10) == lo);
  CHECK(b.fabric.mmio_read(h.base + 0x14) == hi);
  CHECK(b.hal.get_arg(h, "a_op") == value);

  for (std::uint64_t v : {0ull, 1ull, 0xffffffffull, 0x1ffffffffull, 0xfedcba9876543210ull, ~0ull}) {
    b.hal.set_arg(h, "b_op", v);
    CHECK(b.hal.get_arg(h, "b_op") == v);
  }
  b.hal.set_arg(h, "length", 0x1234567890ull);
  CHECK(b.hal.get_arg(h, "length") == 0x34567890ull);  // 32-bit register keeps the low word
  CHECK_ERRC(b.hal.set_arg(h, "z_op", 1), Errc::unknown_name);
  CHECK_ERRC(b.hal.set_arg(h, "control", 1), Errc::invalid);
}

TEST_CASE("run_function computes vadd and reports the variant latency") {
  Board b;
  BufferHandle a = b.fabric.alloc(4), bb = b.fabric.alloc(4), c = b.fabric.alloc(4);
  b.fabric.buf_write(a.addr, 0, ints({5}));
  b.fabric.buf_write(bb.addr, 0, ints({7}));
  Micros elapsed = b.hal.run_function("vadd", {{"a_op", a.addr}, {"b_op", bb.addr}, {"c_out", c.addr}, {"length", 1}});
  CHECK(b.fabric.buf_read(c.addr, 0, 4) == ints({12}));

  const auto& v = b.registry.variants_for("vadd", "Ultra96_100MHz_2").front();
  CHECK(elapsed == b.fabric.latency(v.latency, 1, 2));

  CHECK_ERRC(b.hal.run_function("vadd", {{"z_op", 1}}), Errc::unknown_name);
}

TEST_CASE("repeated run_function reconfigures once") {
  Board b;
  BufferHandle a = b.fabric.alloc(16), bb = b.fabric.alloc(16), c = b.fabric.alloc(16);
  for (int k = 0; k < 6; ++k) {
    b.fabric.buf_write(a.addr, 0, ints({k, k, k, k}));
    b.fabric.buf_write(bb.addr, 0, ints({1, 2, 3, 4}));
    b.hal.run_function("vadd", {{"a_op", a.addr}, {"b_op", bb.addr}, {"c_out", c.addr}, {"length", 4}});
    CHECK(b.fabric.buf_read(c.addr, 0, 16) == ints({k + 1, k + 2, k + 3, k + 4}));
  }
  CHECK(b.reconfig_events() == 1);
  CHECK(b.fabric.reconfiguration_count() == 1);
}

TEST_CASE("wait_done consumes ap_done") {
  Board b;
  AccelHandle h = b.hal.load_partial("vadd");
  b.hal.start(h);
  CHECK(b.hal.wait_done(h) > 0);
  std::uint32_t c = b.fabric.mmio_read(h.base);
  CHECK((c & ctrl::ap_done) == 0);
  CHECK((c & ctrl::ap_idle) != 0);
}
