#include "fos/service.hpp"

#include <algorithm>

namespace fos {

using wire::Json;

Service::Service(const ServiceConfig& config) : config_(config) {
  ShellDescriptor shell;
  try {
    shell = parse_shell(read_text_file(config_.shell_file));
  } catch (const Error& e) {
    throw Error(e.code(), config_.shell_file.string() + ": " + e.what());
  }
  registry_.load_directory(config_.repo_dir);
  registry_.add_shell(shell);
  fabric_ = std::make_unique<Fabric>(Fabric::load_shell(shell, FabricConfig::for_profile(config_.profile)));
  if (registry_.contains("vadd")) fabric_->register_model("vadd", vadd_model());
  fabric_->advance_clock(fabric_->now() + config_.server_init_us + config_.descriptor_parse_us);
  startup_us_ = fabric_->now();
  scheduler_ = std::make_unique<Scheduler>(*fabric_, registry_, config_.scheduler);
  scheduler_->on_job_complete([this](const JobRecord& job) { on_job_complete(job); });
}

void Service::open_session(std::uint64_t session, Sink sink) {
  Session s;
  s.sink = std::move(sink);
  sessions_[session] = std::move(s);
}

void Service::close_session(std::uint64_t session) {
  auto it = sessions_.find(session);
  if (it == sessions_.end()) return;
  Session& s = it->second;
  if (s.greeted) scheduler_->cancel_queued(s.user);
  for (std::uint64_t addr : s.buffers) {
    fabric_->free(addr);
    buffer_owner_.erase(addr);
  }
  for (auto r = runs_.begin(); r != runs_.end();) {
    r = r->second.session == session ? runs_.erase(r) : std::next(r);
  }
  sessions_.erase(it);
}

void Service::send(std::uint64_t session, const Json& message) {
  auto it = sessions_.find(session);
  if (it == sessions_.end() || !it->second.sink) return;
  it->second.sink(message.dump());
}

void Service::handle(std::uint64_t session, std::string_view body) {
  auto it = sessions_.find(session);
  if (it == sessions_.end()) return;
  Json req;
  try {
    req = Json::parse(body);
  } catch (const Json::parse_error& e) {
    send(session, wire::error_reply(nullptr, "error", Errc::protocol,
                                    std::string("malformed frame: ") + e.what()));
    return;
  }
  if (!req.is_object() || !req.contains("type") || !req["type"].is_string()) {
    Json id = req.is_object() && req.contains("id") ? req["id"] : Json(nullptr);
    send(session, wire::error_reply(id, "error", Errc::protocol, "request needs a string \"type\""));
    return;
  }
  Json id = req.contains("id") ? req["id"] : Json(nullptr);
  std::string type = req["type"].get<std::string>();
  Json reply;
  try {
    reply = dispatch(session, it->second, req);
  } catch (const Error& e) {
    reply = wire::error_reply(id, type, e.code(), e.what());
  } catch (const Json::exception& e) {
    reply = wire::error_reply(id, type, Errc::protocol, std::string("bad request field: ") + e.what());
  }
  if (!reply.is_null()) send(session, reply);
}

namespace {

Json ok_reply(const Json& req) {
  Json j;
  j["id"] = req.contains("id") ? req["id"] : Json(nullptr);
  j["type"] = req["type"];
  j["ok"] = true;
  return j;
}

}  // namespace

std::uint64_t Service::owned_buffer(const Session& s, const Json& req) {
  std::uint64_t addr = wire::param_from_json(req.at("addr"));
  auto it = buffer_owner_.find(addr);
  if (it == buffer_owner_.end()) throw Error(Errc::unknown_name, "no buffer at " + to_hex(addr));
  if (s.buffers.count(addr) == 0) {
    throw Error(Errc::ownership, "buffer " + to_hex(addr) + " belongs to another session");
  }
  return addr;
}

Json Service::dispatch(std::uint64_t session, Session& s, const Json& req) {
  const std::string type = req["type"].get<std::string>();
  if (type == "hello") return on_hello(session, s, req);
  if (!s.greeted) throw Error(Errc::protocol, "hello is required before \"" + type + "\"");

  if (type == "alloc") {
    auto size = static_cast<std::size_t>(wire::param_from_json(req.at("size")));
    BufferHandle h = fabric_->alloc(size);
    s.buffers.insert(h.addr);
    buffer_owner_[h.addr] = session;
    Json r = ok_reply(req);
    r["addr"] = h.addr;
    r["size"] = h.size;
    return r;
  }
  if (type == "free") {
    std::uint64_t addr = owned_buffer(s, req);
    fabric_->free(addr);
    s.buffers.erase(addr);
    buffer_owner_.erase(addr);
    return ok_reply(req);
  }
  if (type == "buf_write") {
    std::uint64_t addr = owned_buffer(s, req);
    auto offset = static_cast<std::size_t>(wire::param_from_json(req.value("offset", Json(0))));
    auto data = wire::from_hex_bytes(req.at("data").get<std::string>());
    fabric_->buf_write(addr, offset, data);
    Json r = ok_reply(req);
    r["written"] = data.size();
    return r;
  }
  if (type == "buf_read") {
    std::uint64_t addr = owned_buffer(s, req);
    auto offset = static_cast<std::size_t>(wire::param_from_json(req.value("offset", Json(0))));
    auto len = static_cast<std::size_t>(wire::param_from_json(req.at("len")));
    Json r = ok_reply(req);
    r["data"] = wire::to_hex_bytes(fabric_->buf_read(addr, offset, len));
    return r;
  }
  if (type == "run") return on_run(session, s, req);
  if (type == "status") return on_status(req);
  if (type == "trace") {
    Json r = ok_reply(req);
    auto events = scheduler_->trace();
    r["events"] = events.size();
    r["jsonl"] = to_jsonl(events);
    return r;
  }
  if (type == "shutdown") {
    stopping_ = true;
    return ok_reply(req);
  }
  throw Error(Errc::protocol, "unknown request type \"" + type + "\"");
}

Json Service::on_hello(std::uint64_t session, Session& s, const Json& req) {
  if (s.greeted) throw Error(Errc::protocol, "session already said hello");
  int version = req.value("version", 0);
  if (version != wire::kProtocolVersion) {
    throw Error(Errc::protocol, "unsupported protocol version " + std::to_string(version) +
                                    "; daemon speaks " + std::to_string(wire::kProtocolVersion));
  }
  std::string user = req.value("user", std::string());
  if (user.empty()) user = "user" + std::to_string(session);
  for (const auto& [id, other] : sessions_) {
    if (id != session && other.greeted && other.user == user) {
      throw Error(Errc::busy, "user \"" + user + "\" is already connected");
    }
  }
  s.user = user;
  s.greeted = true;
  Json r = ok_reply(req);
  r["version"] = wire::kProtocolVersion;
  r["user"] = user;
  r["session"] = session;
  r["now_us"] = fabric_->now();
  return r;
}

Json Service::on_run(std::uint64_t session, Session& s, const Json& req) {
  std::vector<JobRequest> jobs;
  for (const Json& j : req.at("jobs")) {
    JobRequest job;
    job.accname = j.at("name").get<std::string>();
    if (auto p = j.find("params"); p != j.end()) {
      if (!p->is_object()) throw Error(Errc::protocol, "job \"params\" must be an object");
      for (auto kv = p->begin(); kv != p->end(); ++kv) {
        job.params[kv.key()] = wire::param_from_json(kv.value());
      }
    }
    jobs.push_back(std::move(job));
  }
  Micros received = fabric_->now();
  Ticket t = scheduler_->submit_at(received + config_.rpc_latency_us, s.user, jobs);
  Json id = req.contains("id") ? req["id"] : Json(nullptr);
  if (jobs.empty()) {
    Json r = ok_reply(req);
    r["ticket"] = t.id;
    r["jobs"] = 0;
    r["latency_us"] = 0;
    return r;
  }
  runs_[t.id] = PendingRun{id, session, received, 0, 0};
  return nullptr;
}

void Service::on_job_complete(const JobRecord& job) {
  auto it = runs_.find(job.ticket);
  if (it == runs_.end()) return;
  PendingRun& run = it->second;
  const Ticket& ticket = scheduler_->ticket(job.ticket);
  std::size_t index = static_cast<std::size_t>(
      std::find(ticket.jobs.begin(), ticket.jobs.end(), job.id) - ticket.jobs.begin());
  Micros latency = job.exec_done_us - run.received_us;
  Micros exec = job.exec_done_us - job.exec_start_us;
  Json m;
  m["id"] = run.request_id;
  m["type"] = "job_done";
  m["ticket"] = job.ticket;
  m["index"] = index;
  m["job"] = job.id;
  m["latency_us"] = latency;
  m["rpc_us"] = config_.rpc_latency_us;
  m["queue_us"] = latency - config_.rpc_latency_us - job.reconfig_us - exec;
  m["reconfig_us"] = job.reconfig_us;
  m["exec_us"] = exec;
  m["regions"] = job.regions;
  m["variant"] = job.variant;
  const DeviceInstance* dev = nullptr;
  for (DeviceId d : fabric_->devices()) {
    if (fabric_->device(d).owner_job == job.id) dev = &fabric_->device(d);
  }
  if (dev && !dev->model_error.empty()) m["model_error"] = dev->model_error;
  send(run.session, m);

  run.done += 1;
  run.latency_us = std::max(run.latency_us, latency);
  if (scheduler_->ticket_complete(job.ticket)) {
    Json r;
    r["id"] = run.request_id;
    r["type"] = "run";
    r["ok"] = true;
    r["ticket"] = job.ticket;
    r["jobs"] = run.done;
    r["latency_us"] = run.latency_us;
    std::uint64_t session = run.session;
    runs_.erase(it);
    send(session, r);
  }
}

Json Service::on_status(const Json& req) {
  Json r = ok_reply(req);
  r["shell"] = fabric_->shell().name;
  r["profile"] = fabric_->config().profile;
  r["now_us"] = fabric_->now();
  r["startup_us"] = startup_us_;
  Json regions = Json::array();
  for (std::size_t i = 0; i < fabric_->region_count(); ++i) {
    const Region& reg = fabric_->region(i);
    Json j;
    j["name"] = reg.descriptor.name;
    j["state"] = reg.state == RegionState::blank           ? "blank"
                 : reg.state == RegionState::reconfiguring ? "reconfiguring"
                                                           : "hosting";
    j["function"] = reg.device ? Json(fabric_->device(*reg.device).function) : Json(nullptr);
    j["adaptor"] = reg.adaptor ? Json(std::string(adaptor_name(*reg.adaptor))) : Json(nullptr);
    regions.push_back(std::move(j));
  }
  r["regions"] = std::move(regions);
  r["accelerators"] = registry_.accelerator_names();
  r["sessions"] = sessions_.size();
  r["reconfigurations"] = fabric_->reconfiguration_count();
  return r;
}

}  // namespace fos
