#include "fos/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "fos/registry.hpp"

namespace fos::wire {

std::string encode_body(std::string_view body) {
  if (body.size() > kMaxFrameBytes) throw Error(Errc::protocol, "frame exceeds the size limit");
  auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

std::string encode(const Json& message) { return encode_body(message.dump()); }

void FrameDecoder::feed(const char* data, std::size_t len) { buf_.append(data, len); }

std::optional<std::string> FrameDecoder::next() {
  if (buf_.size() < 4) return std::nullopt;
  auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[i])); };
  std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  if (n > kMaxFrameBytes) throw Error(Errc::protocol, "frame length " + std::to_string(n) + " exceeds the limit");
  if (buf_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string body = buf_.substr(4, n);
  buf_.erase(0, 4 + static_cast<std::size_t>(n));
  return body;
}

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint ep;
  if (text.rfind("unix:", 0) == 0) {
    ep.kind = Kind::local;
    ep.path = std::string(text.substr(5));
    if (ep.path.empty()) throw Error(Errc::invalid, "empty local socket path");
    return ep;
  }
  if (text.rfind("tcp://", 0) == 0) text.remove_prefix(6);
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw Error(Errc::invalid, "endpoint needs HOST:PORT");
  if (colon > 0) ep.host = std::string(text.substr(0, colon));
  std::string port(text.substr(colon + 1));
  char* end = nullptr;
  long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) {
    throw Error(Errc::invalid, "bad port in endpoint \"" + std::string(text) + "\"");
  }
  ep.port = static_cast<std::uint16_t>(p);
  return ep;
}

Endpoint Endpoint::from_env() {
  const char* env = std::getenv("FOS_ENDPOINT");
  if (env && *env) return parse(env);
  return {};
}

std::string Endpoint::str() const {
  if (kind == Kind::local) return "unix:" + path;
  return host + ":" + std::to_string(port);
}

namespace {

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(Errc::io, what + ": " + std::strerror(errno));
}

sockaddr_un local_addr(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw Error(Errc::invalid, "local socket path too long");
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

sockaddr_in tcp_addr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw Error(Errc::invalid, "unsupported host \"" + ep.host + "\"; use an IPv4 address");
  }
  return addr;
}

}  // namespace

int connect_to(const Endpoint& ep) {
  int fd;
  if (ep.kind == Endpoint::Kind::local) {
    fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) sys_fail("socket");
    sockaddr_un addr = local_addr(ep.path);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      int e = errno;
      ::close(fd);
      errno = e;
      sys_fail("connect " + ep.str());
    }
    return fd;
  }
  fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  sockaddr_in addr = tcp_addr(ep);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    int e = errno;
    ::close(fd);
    errno = e;
    sys_fail("connect " + ep.str());
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

int listen_on(const Endpoint& ep, std::uint16_t* bound_port) {
  int fd;
  if (ep.kind == Endpoint::Kind::local) {
    fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) sys_fail("socket");
    ::unlink(ep.path.c_str());
    sockaddr_un addr = local_addr(ep.path);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd);
      sys_fail("bind " + ep.str());
    }
  } else {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) sys_fail("socket");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = tcp_addr(ep);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      int e = errno;
      ::close(fd);
      errno = e;
      sys_fail("bind " + ep.str());
    }
    if (bound_port) {
      socklen_t len = sizeof addr;
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
      *bound_port = ntohs(addr.sin_port);
    }
  }
  if (::listen(fd, 64) != 0) {
    ::close(fd);
    sys_fail("listen " + ep.str());
  }
  return fd;
}

void write_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("send");
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

namespace {

// 0 on clean EOF at offset 0, else throws on short reads.
bool read_exact(int fd, char* out, std::size_t len, bool eof_ok) {
  std::size_t got = 0;
  while (got < len) {
    ssize_t n = ::recv(fd, out + got, len - got, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_fail("recv");
    }
    if (n == 0) {
      if (got == 0 && eof_ok) return false;
      throw Error(Errc::io, "connection closed mid-frame");
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

bool read_frame(int fd, std::string& body) {
  unsigned char hdr[4];
  if (!read_exact(fd, reinterpret_cast<char*>(hdr), 4, true)) return false;
  std::uint32_t n = (std::uint32_t{hdr[0]} << 24) | (std::uint32_t{hdr[1]} << 16) |
                    (std::uint32_t{hdr[2]} << 8) | std::uint32_t{hdr[3]};
  if (n > kMaxFrameBytes) throw Error(Errc::protocol, "frame length exceeds the limit");
  body.assign(n, '\0');
  if (n > 0) read_exact(fd, body.data(), n, false);
  return true;
}

std::string to_hex_bytes(const std::vector<std::uint8_t>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

std::vector<std::uint8_t> from_hex_bytes(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::parse, "hex data has odd length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::parse, "invalid hex digit in data");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

namespace {

Json base(std::uint64_t id, const char* type) {
  Json j;
  j["id"] = id;
  j["type"] = type;
  return j;
}

}  // namespace

Json hello_request(std::uint64_t id, const std::string& user) {
  Json j = base(id, "hello");
  j["version"] = kProtocolVersion;
  j["user"] = user;
  return j;
}

Json alloc_request(std::uint64_t id, std::size_t size) {
  Json j = base(id, "alloc");
  j["size"] = size;
  return j;
}

Json free_request(std::uint64_t id, std::uint64_t addr) {
  Json j = base(id, "free");
  j["addr"] = addr;
  return j;
}

Json buf_write_request(std::uint64_t id, std::uint64_t addr, std::size_t offset,
                       const std::vector<std::uint8_t>& data) {
  Json j = base(id, "buf_write");
  j["addr"] = addr;
  j["offset"] = offset;
  j["data"] = to_hex_bytes(data);
  return j;
}

Json buf_read_request(std::uint64_t id, std::uint64_t addr, std::size_t offset, std::size_t len) {
  Json j = base(id, "buf_read");
  j["addr"] = addr;
  j["offset"] = offset;
  j["len"] = len;
  return j;
}

Json run_request(std::uint64_t id, const std::vector<WireJob>& jobs) {
  Json j = base(id, "run");
  Json list = Json::array();
  for (const auto& job : jobs) {
    Json entry;
    entry["name"] = job.name;
    Json params = Json::object();
    for (const auto& [k, v] : job.params) params[k] = std::to_string(v);
    entry["params"] = std::move(params);
    list.push_back(std::move(entry));
  }
  j["jobs"] = std::move(list);
  return j;
}

Json status_request(std::uint64_t id) { return base(id, "status"); }
Json trace_request(std::uint64_t id) { return base(id, "trace"); }
Json shutdown_request(std::uint64_t id) { return base(id, "shutdown"); }

Json error_reply(const Json& id, std::string_view type, Errc code, std::string_view message) {
  Json j;
  j["id"] = id;
  j["type"] = type;
  j["ok"] = false;
  Json err;
  err["code"] = errc_name(code);
  err["message"] = message;
  j["error"] = std::move(err);
  return j;
}

std::uint64_t param_from_json(const Json& value) {
  if (value.is_number_unsigned()) return value.get<std::uint64_t>();
  if (value.is_number_integer()) {
    if (value.get<std::int64_t>() < 0) throw Error(Errc::invalid, "parameter values must be non-negative");
    return value.get<std::uint64_t>();
  }
  if (value.is_string()) {
    try {
      return parse_number(value.get<std::string>());
    } catch (const Error& e) {
      throw Error(Errc::invalid, e.what());
    }
  }
  throw Error(Errc::invalid, "parameter values must be integers or numeric strings");
}

}  // namespace fos::wire
