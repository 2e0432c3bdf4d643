#pragma once

// Shell and accelerator descriptors, and the name-indexed registry that the
// upper layers query to request hardware by logical function name.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fos/error.hpp"

namespace fos {

struct RegionFootprint {
  std::uint32_t luts = 0;
  std::uint32_t regs = 0;
  std::uint32_t brams = 0;
  std::uint32_t dsps = 0;

  bool fits_within(const RegionFootprint& capacity) const;
  RegionFootprint scaled(std::uint32_t slots) const;
  friend bool operator==(const RegionFootprint&, const RegionFootprint&) = default;
};

struct RegionDescriptor {
  std::string name;
  std::string blank;         // blanking bitstream token
  std::uint32_t bridge = 0;  // decoupler register address
  std::uint32_t addr = 0;    // base of the 4 KiB accelerator window
  friend bool operator==(const RegionDescriptor&, const RegionDescriptor&) = default;
};

inline constexpr std::uint32_t kRegionWindowBytes = 0x1000;

struct ShellDescriptor {
  std::string name;
  std::string bitfile;
  std::vector<RegionDescriptor> regions;  // physical adjacency order
  std::optional<RegionFootprint> footprint;

  std::optional<std::size_t> region_index(std::string_view region) const;
  friend bool operator==(const ShellDescriptor&, const ShellDescriptor&) = default;
};

enum class Interface { axi_master_slave, axi_stream_32 };

std::string_view interface_name(Interface iface);

struct LatencyModel {
  double compute_us = 0.0;
  double bytes_moved = 0.0;
  double speedup_per_extra_slot = 1.0;
  friend bool operator==(const LatencyModel&, const LatencyModel&) = default;
};

struct BitstreamVariant {
  std::string name;
  std::string shell;
  std::vector<std::string> region;  // consecutive run; its length is the slot span
  Interface interface = Interface::axi_master_slave;
  std::optional<RegionFootprint> resources;
  LatencyModel latency;

  std::size_t span() const { return region.size(); }
  friend bool operator==(const BitstreamVariant&, const BitstreamVariant&) = default;
};

struct RegisterEntry {
  std::string name;
  std::uint32_t offset = 0;
  unsigned width = 64;  // bits; parameters are 64-bit unless flagged 32
  friend bool operator==(const RegisterEntry&, const RegisterEntry&) = default;
};

inline constexpr std::string_view kControlRegister = "control";

class RegisterMap {
 public:
  RegisterMap();
  explicit RegisterMap(std::vector<RegisterEntry> entries);

  const std::vector<RegisterEntry>& entries() const { return entries_; }
  const RegisterEntry* find(std::string_view name) const;
  const RegisterEntry& at(std::string_view name) const;

  friend bool operator==(const RegisterMap&, const RegisterMap&) = default;

 private:
  std::vector<RegisterEntry> entries_;
};

struct AcceleratorDescriptor {
  std::string name;
  std::vector<BitstreamVariant> bitfiles;
  RegisterMap registers;
  friend bool operator==(const AcceleratorDescriptor&, const AcceleratorDescriptor&) = default;
};

// Parsing accepts JSON with trailing commas. Hex strings may
// omit the "0x" prefix; serialization always emits it.
ShellDescriptor parse_shell(std::string_view text);
AcceleratorDescriptor parse_accelerator(std::string_view text);
std::string serialize_shell(const ShellDescriptor& shell);
std::string serialize_accelerator(const AcceleratorDescriptor& accel);

// Checks the variants compiled for `shell` against its region order and footprint.
void validate_against(const AcceleratorDescriptor& accel, const ShellDescriptor& shell);

std::uint64_t parse_number(std::string_view text);  // decimal, or hex with 0x
std::string to_hex(std::uint64_t value);

class Registry {
 public:
  void add_shell(ShellDescriptor shell);
  void add(AcceleratorDescriptor accel);

  const ShellDescriptor& shell(std::string_view name) const;
  const AcceleratorDescriptor& lookup(std::string_view name) const;
  bool contains(std::string_view name) const;

  // Variants compiled for `shell`, widest span first; ties keep declaration order.
  std::vector<BitstreamVariant> variants_for(std::string_view name, std::string_view shell) const;

  std::vector<std::string> accelerator_names() const;
  std::size_t accelerator_count() const { return accels_.size(); }
  std::size_t shell_count() const { return shells_.size(); }

  // Loads `dir`/shells/*.json and `dir`/accels/*.json in filename order.
  void load_directory(const std::filesystem::path& dir);

 private:
  std::map<std::string, ShellDescriptor, std::less<>> shells_;
  std::map<std::string, AcceleratorDescriptor, std::less<>> accels_;
};

std::string read_text_file(const std::filesystem::path& path);

}  // namespace fos
