#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fos {

using Micros = std::int64_t;

enum class Errc {
  parse,         // malformed JSON or bad field type
  invalid,       // descriptor or argument violates an invariant
  unknown_name,  // accelerator, register, shell, or region not found
  no_capacity,   // nothing fits on the fabric
  fault,         // MMIO fault: unmapped or decoupled
  busy,          // device or region in use
  out_of_range,  // buffer access past the allocation
  ownership,     // buffer belongs to another session
  protocol,      // wire-level violation
  io,            // file or socket failure
};

std::string_view errc_name(Errc code);
// Inverse of errc_name; unrecognized names map to protocol.
Errc errc_from_name(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace fos
