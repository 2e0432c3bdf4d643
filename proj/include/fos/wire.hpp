#pragma once

// Framing and message shapes shared by the daemon and its clients. A frame
// is a 4-byte big-endian length followed by that many bytes of UTF-8 JSON.
// The byte layout is described in docs/protocol.md.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "fos/error.hpp"

namespace fos::wire {

using Json = nlohmann::ordered_json;

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 16u * 1024u * 1024u;
inline constexpr std::uint16_t kDefaultPort = 7900;

std::string encode(const Json& message);
std::string encode_body(std::string_view body);

// Incremental decoder for a byte stream. Throws protocol errors on frames
// above kMaxFrameBytes; the stream cannot be resynchronized after that.
class FrameDecoder {
 public:
  void feed(const char* data, std::size_t len);
  std::optional<std::string> next();
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
};

struct Endpoint {
  enum class Kind { tcp, local };
  Kind kind = Kind::tcp;
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;
  std::string path;  // for local sockets

  // "HOST:PORT", "tcp://HOST:PORT", ":PORT" or "unix:PATH".
  static Endpoint parse(std::string_view text);
  // FOS_ENDPOINT when set, else the default TCP endpoint.
  static Endpoint from_env();
  std::string str() const;
};

// Blocking socket helpers. Descriptors are plain POSIX file descriptors.
int connect_to(const Endpoint& ep);
int listen_on(const Endpoint& ep, std::uint16_t* bound_port = nullptr);
void write_all(int fd, std::string_view bytes);
// Returns false on orderly end of stream before any byte of a frame.
bool read_frame(int fd, std::string& body);

std::string to_hex_bytes(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> from_hex_bytes(std::string_view hex);

// Request constructors. Key order is part of the protocol.
Json hello_request(std::uint64_t id, const std::string& user);
Json alloc_request(std::uint64_t id, std::size_t size);
Json free_request(std::uint64_t id, std::uint64_t addr);
Json buf_write_request(std::uint64_t id, std::uint64_t addr, std::size_t offset,
                       const std::vector<std::uint8_t>& data);
Json buf_read_request(std::uint64_t id, std::uint64_t addr, std::size_t offset, std::size_t len);

struct WireJob {
  std::string name;
  std::map<std::string, std::uint64_t> params;
};
Json run_request(std::uint64_t id, const std::vector<WireJob>& jobs);
Json status_request(std::uint64_t id);
Json trace_request(std::uint64_t id);
Json shutdown_request(std::uint64_t id);

Json error_reply(const Json& id, std::string_view type, Errc code, std::string_view message);

// Accepts unsigned integers, decimal strings and 0x-prefixed hex strings.
std::uint64_t param_from_json(const Json& value);

}  // namespace fos::wire
