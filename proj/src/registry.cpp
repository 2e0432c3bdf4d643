#include "fos/registry.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fos {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::parse: return "parse";
    case Errc::invalid: return "invalid";
    case Errc::unknown_name: return "unknown_name";
    case Errc::no_capacity: return "no_capacity";
    case Errc::fault: return "fault";
    case Errc::busy: return "busy";
    case Errc::out_of_range: return "out_of_range";
    case Errc::ownership: return "ownership";
    case Errc::protocol: return "protocol";
    case Errc::io: return "io";
  }
  return "unknown";
}

Errc errc_from_name(std::string_view name) {
  for (Errc c : {Errc::parse, Errc::invalid, Errc::unknown_name, Errc::no_capacity, Errc::fault,
                 Errc::busy, Errc::out_of_range, Errc::ownership, Errc::protocol, Errc::io}) {
    if (errc_name(c) == name) return c;
  }
  return Errc::protocol;
}

bool RegionFootprint::fits_within(const RegionFootprint& capacity) const {
  return luts <= capacity.luts && regs <= capacity.regs && brams <= capacity.brams &&
         dsps <= capacity.dsps;
}

RegionFootprint RegionFootprint::scaled(std::uint32_t slots) const {
  return {luts * slots, regs * slots, brams * slots, dsps * slots};
}

std::optional<std::size_t> ShellDescriptor::region_index(std::string_view region) const {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].name == region) return i;
  }
  return std::nullopt;
}

std::string_view interface_name(Interface iface) {
  return iface == Interface::axi_stream_32 ? "axi-stream-32" : "axi-master-slave";
}

namespace {

// Hand-written descriptors often carry trailing commas; drop any comma whose next
// significant character closes an array or object.
std::string strip_trailing_commas(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      out.push_back(c);
      if (c == '\\' && i + 1 < text.size()) {
        out.push_back(text[++i]);
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == ']' || text[j] == '}')) continue;
    }
    out.push_back(c);
  }
  return out;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(strip_trailing_commas(text));
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse, std::string("malformed JSON: ") + e.what());
  }
}

const json& field(const json& obj, const char* key, const char* where) {
  if (!obj.is_object()) throw Error(Errc::parse, std::string(where) + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(Errc::parse, std::string(where) + ": missing field \"" + key + "\"");
  }
  return *it;
}

std::string string_field(const json& obj, const char* key, const char* where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) {
    throw Error(Errc::parse, std::string(where) + ": field \"" + key + "\" must be a string");
  }
  return v.get<std::string>();
}

std::uint64_t hex_value(const json& v, const char* what) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  if (!v.is_string()) throw Error(Errc::parse, std::string(what) + " must be a hex string");
  std::string s = v.get<std::string>();
  std::string_view digits = s;
  if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
    digits.remove_prefix(2);
  }
  if (digits.empty() || digits.size() > 16) {
    throw Error(Errc::parse, std::string(what) + ": bad hex value \"" + s + "\"");
  }
  std::uint64_t value = 0;
  for (char c : digits) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw Error(Errc::parse, std::string(what) + ": bad hex value \"" + s + "\"");
    value = (value << 4) | static_cast<std::uint64_t>(d);
  }
  return value;
}

std::uint32_t address_field(const json& obj, const char* key, const std::string& region) {
  std::string what = "region " + region + " " + key;
  std::uint64_t v = hex_value(field(obj, key, "region"), what.c_str());
  if (v > 0xffffffffull) throw Error(Errc::invalid, what + " exceeds 32 bits");
  if (v % kRegionWindowBytes != 0) throw Error(Errc::invalid, what + " is not 4 KiB aligned");
  return static_cast<std::uint32_t>(v);
}

RegionFootprint parse_footprint(const json& v, const char* where) {
  RegionFootprint f;
  auto count = [&](const char* key) -> std::uint32_t {
    const json& c = field(v, key, where);
    if (!c.is_number_integer() || c.get<std::int64_t>() < 0) {
      throw Error(Errc::parse, std::string(where) + ": \"" + key + "\" must be a count");
    }
    return c.get<std::uint32_t>();
  };
  f.luts = count("luts");
  f.regs = count("regs");
  f.brams = count("brams");
  f.dsps = count("dsps");
  return f;
}

ordered_json footprint_json(const RegionFootprint& f) {
  ordered_json j;
  j["luts"] = f.luts;
  j["regs"] = f.regs;
  j["brams"] = f.brams;
  j["dsps"] = f.dsps;
  return j;
}

double number_field(const json& obj, const char* key, double fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number()) throw Error(Errc::parse, std::string("\"") + key + "\" must be numeric");
  return it->get<double>();
}

}  // namespace

std::string to_hex(std::uint64_t value) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t parse_number(std::string_view text) {
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    return hex_value(json(std::string(text)), "value");
  }
  if (text.empty() || text.size() > 20) {
    throw Error(Errc::parse, "bad number \"" + std::string(text) + "\"");
  }
  std::uint64_t value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') throw Error(Errc::parse, "bad number \"" + std::string(text) + "\"");
    std::uint64_t next = value * 10 + static_cast<std::uint64_t>(c - '0');
    if (next / 10 != value) throw Error(Errc::parse, "number overflows 64 bits");
    value = next;
  }
  return value;
}

ShellDescriptor parse_shell(std::string_view text) {
  json doc = parse_json(text);
  ShellDescriptor shell;
  shell.name = string_field(doc, "name", "shell");
  shell.bitfile = string_field(doc, "bitfile", "shell");
  const json& regions = field(doc, "regions", "shell");
  if (!regions.is_array()) throw Error(Errc::parse, "shell: \"regions\" must be an array");
  for (const json& r : regions) {
    RegionDescriptor region;
    region.name = string_field(r, "name", "region");
    region.blank = string_field(r, "blank", "region");
    region.bridge = address_field(r, "bridge", region.name);
    region.addr = address_field(r, "addr", region.name);
    shell.regions.push_back(std::move(region));
  }
  if (auto it = doc.find("footprint"); it != doc.end()) {
    shell.footprint = parse_footprint(*it, "shell footprint");
  }

  std::set<std::string, std::less<>> names;
  for (const auto& r : shell.regions) {
    if (!names.insert(r.name).second) {
      throw Error(Errc::invalid, "duplicate region name \"" + r.name + "\"");
    }
  }
  auto in_window = [](std::uint32_t a, const RegionDescriptor& r) {
    return a >= r.addr && a - r.addr < kRegionWindowBytes;
  };
  for (std::size_t i = 0; i < shell.regions.size(); ++i) {
    const auto& a = shell.regions[i];
    for (std::size_t j = 0; j < shell.regions.size(); ++j) {
      const auto& b = shell.regions[j];
      if (in_window(a.bridge, b)) {
        throw Error(Errc::invalid,
                    "bridge of " + a.name + " overlaps the address window of " + b.name);
      }
      if (j <= i) continue;
      if (a.addr == b.addr) {
        throw Error(Errc::invalid, "address windows of " + a.name + " and " + b.name + " overlap");
      }
      if (a.bridge == b.bridge) {
        throw Error(Errc::invalid, "bridges of " + a.name + " and " + b.name + " coincide");
      }
    }
  }
  if (shell.footprint && (shell.footprint->luts == 0 || shell.footprint->regs == 0 ||
                          shell.footprint->brams == 0 || shell.footprint->dsps == 0)) {
    throw Error(Errc::invalid, "region footprint counts must be positive");
  }
  return shell;
}

namespace {

Interface parse_interface(const std::string& s) {
  if (s == "axi-master-slave") return Interface::axi_master_slave;
  if (s == "axi-stream-32") return Interface::axi_stream_32;
  throw Error(Errc::parse, "unknown interface \"" + s + "\"");
}

}  // namespace

RegisterMap::RegisterMap() : RegisterMap(std::vector<RegisterEntry>{}) {}

RegisterMap::RegisterMap(std::vector<RegisterEntry> entries) {
  auto control = std::find_if(entries.begin(), entries.end(),
                              [](const RegisterEntry& e) { return e.name == kControlRegister; });
  if (control == entries.end()) {
    entries.insert(entries.begin(), RegisterEntry{std::string(kControlRegister), 0, 32});
  } else {
    if (control->offset != 0) throw Error(Errc::invalid, "control register must sit at offset 0");
    control->width = 32;
  }
  std::set<std::string, std::less<>> names;
  for (const auto& e : entries) {
    if (!names.insert(e.name).second) {
      throw Error(Errc::invalid, "duplicate register name \"" + e.name + "\"");
    }
    if (e.offset % 4 != 0) throw Error(Errc::invalid, "register " + e.name + " is not word aligned");
    if (e.width != 32 && e.width != 64) {
      throw Error(Errc::invalid, "register " + e.name + " width must be 32 or 64");
    }
    if (e.offset + e.width / 8 > kRegionWindowBytes) {
      throw Error(Errc::invalid, "register " + e.name + " lies outside the 4 KiB window");
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const auto& a = entries[i];
      const auto& b = entries[j];
      bool disjoint = a.offset + a.width / 8 <= b.offset || b.offset + b.width / 8 <= a.offset;
      if (!disjoint) throw Error(Errc::invalid, "registers " + a.name + " and " + b.name + " overlap");
    }
  }
  entries_ = std::move(entries);
}

const RegisterEntry* RegisterMap::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const RegisterEntry& RegisterMap::at(std::string_view name) const {
  if (const auto* e = find(name)) return *e;
  throw Error(Errc::unknown_name, "unknown register \"" + std::string(name) + "\"");
}

AcceleratorDescriptor parse_accelerator(std::string_view text) {
  json doc = parse_json(text);
  AcceleratorDescriptor accel;
  accel.name = string_field(doc, "name", "accelerator");
  const json& bitfiles = field(doc, "bitfiles", "accelerator");
  if (!bitfiles.is_array()) throw Error(Errc::parse, "accelerator: \"bitfiles\" must be an array");
  for (const json& b : bitfiles) {
    BitstreamVariant v;
    v.name = string_field(b, "name", "bitfile");
    v.shell = string_field(b, "shell", "bitfile");
    const json& region = field(b, "region", "bitfile");
    if (region.is_string()) {
      v.region.push_back(region.get<std::string>());
    } else if (region.is_array()) {
      for (const json& r : region) {
        if (!r.is_string()) throw Error(Errc::parse, "bitfile region names must be strings");
        v.region.push_back(r.get<std::string>());
      }
    } else {
      throw Error(Errc::parse, "bitfile: \"region\" must be a string or an array");
    }
    if (v.region.empty()) throw Error(Errc::invalid, "bitfile " + v.name + " names no region");
    if (auto it = b.find("interface"); it != b.end()) {
      if (!it->is_string()) throw Error(Errc::parse, "bitfile: \"interface\" must be a string");
      v.interface = parse_interface(it->get<std::string>());
    }
    if (auto it = b.find("resources"); it != b.end()) {
      v.resources = parse_footprint(*it, "bitfile resources");
    }
    if (auto it = b.find("latency"); it != b.end()) {
      if (!it->is_object()) throw Error(Errc::parse, "bitfile: \"latency\" must be an object");
      v.latency.compute_us = number_field(*it, "compute_us", 0.0);
      v.latency.bytes_moved = number_field(*it, "bytes_moved", 0.0);
      v.latency.speedup_per_extra_slot = number_field(*it, "speedup_per_extra_slot", 1.0);
      if (v.latency.compute_us < 0 || v.latency.bytes_moved < 0 ||
          v.latency.speedup_per_extra_slot <= 0) {
        throw Error(Errc::invalid, "bitfile " + v.name + " has a negative latency model");
      }
    }
    accel.bitfiles.push_back(std::move(v));
  }
  if (accel.bitfiles.empty()) {
    throw Error(Errc::invalid, "accelerator " + accel.name + " has no bitstream variants");
  }
  for (std::size_t i = 0; i < accel.bitfiles.size(); ++i) {
    for (std::size_t j = i + 1; j < accel.bitfiles.size(); ++j) {
      const auto& a = accel.bitfiles[i];
      const auto& b = accel.bitfiles[j];
      if (a.shell == b.shell && a.span() == b.span()) {
        throw Error(Errc::invalid, "accelerator " + accel.name + " declares two " +
                                       std::to_string(a.span()) + "-slot variants for shell " +
                                       a.shell);
      }
    }
  }

  std::vector<RegisterEntry> entries;
  if (auto it = doc.find("registers"); it != doc.end()) {
    if (!it->is_array()) throw Error(Errc::parse, "accelerator: \"registers\" must be an array");
    for (const json& r : *it) {
      RegisterEntry e;
      e.name = string_field(r, "name", "register");
      std::uint64_t offset = hex_value(field(r, "offset", "register"), "register offset");
      if (offset >= kRegionWindowBytes) {
        throw Error(Errc::invalid, "register " + e.name + " offset outside the window");
      }
      e.offset = static_cast<std::uint32_t>(offset);
      if (auto w = r.find("width"); w != r.end()) {
        if (!w->is_number_unsigned()) throw Error(Errc::parse, "register width must be 32 or 64");
        e.width = w->get<unsigned>();
      }
      entries.push_back(std::move(e));
    }
  }
  accel.registers = RegisterMap(std::move(entries));
  return accel;
}

std::string serialize_shell(const ShellDescriptor& shell) {
  ordered_json doc;
  doc["name"] = shell.name;
  doc["bitfile"] = shell.bitfile;
  doc["regions"] = ordered_json::array();
  for (const auto& r : shell.regions) {
    ordered_json j;
    j["name"] = r.name;
    j["blank"] = r.blank;
    j["bridge"] = to_hex(r.bridge);
    j["addr"] = to_hex(r.addr);
    doc["regions"].push_back(std::move(j));
  }
  if (shell.footprint) doc["footprint"] = footprint_json(*shell.footprint);
  return doc.dump(2) + "\n";
}

std::string serialize_accelerator(const AcceleratorDescriptor& accel) {
  ordered_json doc;
  doc["name"] = accel.name;
  doc["bitfiles"] = ordered_json::array();
  for (const auto& v : accel.bitfiles) {
    ordered_json j;
    j["name"] = v.name;
    j["shell"] = v.shell;
    j["region"] = v.region;
    j["interface"] = interface_name(v.interface);
    if (v.resources) j["resources"] = footprint_json(*v.resources);
    ordered_json lat;
    lat["compute_us"] = v.latency.compute_us;
    lat["bytes_moved"] = v.latency.bytes_moved;
    lat["speedup_per_extra_slot"] = v.latency.speedup_per_extra_slot;
    j["latency"] = std::move(lat);
    doc["bitfiles"].push_back(std::move(j));
  }
  doc["registers"] = ordered_json::array();
  for (const auto& e : accel.registers.entries()) {
    ordered_json j;
    j["name"] = e.name;
    j["offset"] = to_hex(e.offset);
    j["width"] = e.width;
    doc["registers"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

void validate_against(const AcceleratorDescriptor& accel, const ShellDescriptor& shell) {
  for (const auto& v : accel.bitfiles) {
    if (v.shell != shell.name) continue;
    std::size_t first = 0;
    for (std::size_t k = 0; k < v.region.size(); ++k) {
      auto idx = shell.region_index(v.region[k]);
      if (!idx) {
        throw Error(Errc::unknown_name, "bitfile " + v.name + " names unknown region " +
                                            v.region[k] + " of shell " + shell.name);
      }
      if (k == 0) {
        first = *idx;
      } else if (*idx != first + k) {
        throw Error(Errc::invalid, "bitfile " + v.name + " regions are not a consecutive run");
      }
    }
    if (v.resources && shell.footprint &&
        !v.resources->fits_within(shell.footprint->scaled(static_cast<std::uint32_t>(v.span())))) {
      throw Error(Errc::invalid, "bitfile " + v.name + " overflows its slot span");
    }
  }
}

void Registry::add_shell(ShellDescriptor shell) {
  for (const auto& [name, accel] : accels_) validate_against(accel, shell);
  std::string key = shell.name;
  shells_.insert_or_assign(std::move(key), std::move(shell));
}

void Registry::add(AcceleratorDescriptor accel) {
  for (const auto& [name, shell] : shells_) validate_against(accel, shell);
  if (accels_.count(accel.name) != 0) {
    throw Error(Errc::invalid, "accelerator \"" + accel.name + "\" already registered");
  }
  std::string key = accel.name;
  accels_.emplace(std::move(key), std::move(accel));
}

const ShellDescriptor& Registry::shell(std::string_view name) const {
  auto it = shells_.find(name);
  if (it == shells_.end()) throw Error(Errc::unknown_name, "unknown shell \"" + std::string(name) + "\"");
  return it->second;
}

const AcceleratorDescriptor& Registry::lookup(std::string_view name) const {
  auto it = accels_.find(name);
  if (it == accels_.end()) {
    throw Error(Errc::unknown_name, "unknown accelerator \"" + std::string(name) + "\"");
  }
  return it->second;
}

bool Registry::contains(std::string_view name) const { return accels_.find(name) != accels_.end(); }

std::vector<BitstreamVariant> Registry::variants_for(std::string_view name,
                                                     std::string_view shell) const {
  std::vector<BitstreamVariant> out;
  for (const auto& v : lookup(name).bitfiles) {
    if (v.shell == shell) out.push_back(v);
  }
  std::stable_sort(out.begin(), out.end(), [](const BitstreamVariant& a, const BitstreamVariant& b) {
    return a.span() > b.span();
  });
  return out;
}

std::vector<std::string> Registry::accelerator_names() const {
  std::vector<std::string> names;
  for (const auto& [name, accel] : accels_) names.push_back(name);
  return names;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::vector<std::filesystem::path> json_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

void Registry::load_directory(const std::filesystem::path& dir) {
  auto attempt = [](const std::filesystem::path& file, auto&& fn) {
    try {
      fn(read_text_file(file));
    } catch (const Error& e) {
      throw Error(e.code(), file.string() + ": " + e.what());
    }
  };
  for (const auto& file : json_files(dir / "shells")) {
    attempt(file, [&](const std::string& text) { add_shell(parse_shell(text)); });
  }
  for (const auto& file : json_files(dir / "accels")) {
    attempt(file, [&](const std::string& text) { add(parse_accelerator(text)); });
  }
}

}  // namespace fos
