#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fos/bench.hpp"
#include "fos/client.hpp"
#include "fos/daemon.hpp"
#include "fos/hal.hpp"
#include "fos/oracle.hpp"
#include "fos/scheduler.hpp"

namespace py = pybind11;
using namespace fos;

namespace {

py::object to_py(const wire::Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::object parsed(const std::string& canonical) { return py::module_::import("json").attr("loads")(canonical); }

std::vector<std::uint8_t> as_bytes(const py::bytes& b) {
  std::string s = b;
  return {s.begin(), s.end()};
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

std::uint64_t param_value(const py::handle& v) {
  if (py::isinstance<py::str>(v)) return wire::param_from_json(wire::Json(v.cast<std::string>()));
  return v.cast<std::uint64_t>();
}

std::map<std::string, std::uint64_t> params_of(const py::dict& d) {
  std::map<std::string, std::uint64_t> out;
  for (auto [k, v] : d) out[k.cast<std::string>()] = param_value(v);
  return out;
}

std::vector<wire::WireJob> jobs_of(const py::list& jobs) {
  std::vector<wire::WireJob> out;
  for (const auto& item : jobs) {
    py::dict d = item.cast<py::dict>();
    wire::WireJob job;
    job.name = d["name"].cast<std::string>();
    if (d.contains("params")) job.params = params_of(d["params"].cast<py::dict>());
    out.push_back(std::move(job));
  }
  return out;
}

struct Board {
  Registry registry;
  Fabric fabric;
  Hal hal;

  Board(const std::filesystem::path& shell_file, const std::filesystem::path& repo_dir, const std::string& profile)
      : registry(load(shell_file, repo_dir)),
        fabric(Fabric::load_shell(parse_shell(read_text_file(shell_file)), FabricConfig::for_profile(profile))),
        hal(fabric, registry) {
    if (registry.contains("vadd")) fabric.register_model("vadd", vadd_model());
  }

  static Registry load(const std::filesystem::path& shell_file, const std::filesystem::path& repo_dir) {
    Registry r;
    r.load_directory(repo_dir);
    r.add_shell(parse_shell(read_text_file(shell_file)));
    return r;
  }
};

py::dict run_dict(const RunResult& r) {
  py::list jobs;
  for (const auto& j : r.jobs) {
    py::dict d;
    d["index"] = j.index;
    d["job"] = j.job;
    d["latency_us"] = j.latency_us;
    d["rpc_us"] = j.rpc_us;
    d["queue_us"] = j.queue_us;
    d["reconfig_us"] = j.reconfig_us;
    d["exec_us"] = j.exec_us;
    d["regions"] = j.regions;
    d["variant"] = j.variant;
    jobs.append(d);
  }
  py::dict out;
  out["ticket"] = r.ticket;
  out["latency_us"] = r.latency_us;
  out["jobs"] = jobs;
  return out;
}

}  // namespace

PYBIND11_MODULE(_fos, m) {
  m.doc() = "FPGA runtime simulator: descriptors, scheduler, daemon and client";

  static py::handle fos_error = py::exception<Error>(m, "FosError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = fos_error(py::str(e.what()));
      inst.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(fos_error.ptr(), inst.ptr());
    }
  });

  m.def("parse_shell", [](const std::string& text) { return parsed(serialize_shell(parse_shell(text))); });
  m.def("parse_accelerator",
        [](const std::string& text) { return parsed(serialize_accelerator(parse_accelerator(text))); });
  m.def("canonical_shell", [](const std::string& text) { return serialize_shell(parse_shell(text)); });
  m.def("canonical_accelerator",
        [](const std::string& text) { return serialize_accelerator(parse_accelerator(text)); });

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("description", &Scenario::description)
      .def_property_readonly("job_count", [](const Scenario& s) { return job_count(s); })
      .def_property_readonly("region_count", [](const Scenario& s) { return s.shell.regions.size(); });
  m.def("load_scenario", [](const std::filesystem::path& p) { return load_scenario(p); });
  m.def("parse_scenario", [](const std::string& text, const std::filesystem::path& base) {
    return parse_scenario(text, base);
  }, py::arg("text"), py::arg("base_dir") = std::filesystem::path());

  m.def(
      "run_scenario",
      [](const Scenario& sc, std::optional<std::string> baseline) {
        std::optional<Policy> policy;
        if (baseline) {
          if (*baseline != "fixed") throw Error(Errc::invalid, "unknown baseline \"" + *baseline + "\"");
          policy = Policy::fixed;
        }
        ScenarioResult r;
        {
          py::gil_scoped_release nogil;
          r = run_scenario(sc, policy);
        }
        py::dict d;
        d["trace"] = to_jsonl(r.trace);
        d["metrics"] = metrics_csv(r.stats);
        d["makespan_us"] = r.stats.makespan_us;
        d["reconfigurations"] = r.stats.reconfigurations;
        d["jobs"] = r.stats.jobs.size();
        return d;
      },
      py::arg("scenario"), py::arg("baseline") = py::none());
  m.def("oracle_trace", [](const Scenario& sc) { return to_jsonl(oracle_timeline(sc)); });
  m.def("within_oracle_limits", [](const Scenario& sc) { return within_oracle_limits(sc); });
  m.def("diff_traces", [](const std::string& a, const std::string& b) {
    TraceDiff d = diff_jsonl(a, b);
    return py::make_tuple(d.identical, d.line);
  });

  m.def("run_suite", [](const std::filesystem::path& corpus) {
    bench::SuiteReport report;
    {
      py::gil_scoped_release nogil;
      report = bench::run_suite(corpus);
    }
    py::list out;
    for (const auto& r : report.results) {
      py::dict d;
      d["id"] = r.id;
      d["name"] = r.name;
      d["pass"] = r.pass;
      d["measured"] = r.measured;
      out.append(d);
    }
    return out;
  });

  py::class_<Board>(m, "Board")
      .def(py::init<const std::filesystem::path&, const std::filesystem::path&, const std::string&>(),
           py::arg("shell_file"), py::arg("repo_dir"), py::arg("profile") = "ultra96")
      .def_property_readonly("now_us", [](const Board& b) { return b.fabric.now(); })
      .def_property_readonly("reconfigurations", [](const Board& b) { return b.fabric.reconfiguration_count(); })
      .def("alloc", [](Board& b, std::size_t size) { return b.fabric.alloc(size).addr; })
      .def("free", [](Board& b, std::uint64_t addr) { b.fabric.free(addr); })
      .def("write", [](Board& b, std::uint64_t addr, const py::bytes& data,
                       std::size_t offset) { b.fabric.buf_write(addr, offset, as_bytes(data)); },
           py::arg("addr"), py::arg("data"), py::arg("offset") = 0)
      .def("read", [](Board& b, std::uint64_t addr, std::size_t len,
                      std::size_t offset) { return to_bytes(b.fabric.buf_read(addr, offset, len)); },
           py::arg("addr"), py::arg("len"), py::arg("offset") = 0)
      .def("run_function", [](Board& b, const std::string& name, const py::dict& params) {
        return b.hal.run_function(name, params_of(params));
      }, py::arg("name"), py::arg("params") = py::dict());

  py::class_<Daemon>(m, "Daemon")
      .def(py::init([](const std::filesystem::path& shell_file, const std::filesystem::path& repo_dir,
                       const std::string& endpoint, const std::string& profile,
                       std::optional<std::string> local, std::optional<std::filesystem::path> trace_out) {
             ServiceConfig cfg;
             cfg.shell_file = shell_file;
             cfg.repo_dir = repo_dir;
             cfg.profile = profile;
             DaemonOptions opts;
             opts.endpoint = wire::Endpoint::parse(endpoint);
             if (local) opts.local_endpoint = wire::Endpoint::parse("unix:" + *local);
             if (trace_out) opts.trace_out = *trace_out;
             return std::make_unique<Daemon>(cfg, opts);
           }),
           py::arg("shell_file"), py::arg("repo_dir"), py::arg("endpoint") = "127.0.0.1:0",
           py::arg("profile") = "ultra96", py::arg("local") = py::none(), py::arg("trace_out") = py::none())
      .def("start", &Daemon::start)
      .def_property_readonly("port", &Daemon::port)
      .def_property_readonly("startup_us", &Daemon::startup_us)
      .def("stop", &Daemon::stop, py::call_guard<py::gil_scoped_release>())
      .def("wait", &Daemon::wait, py::call_guard<py::gil_scoped_release>());

  py::class_<Client>(m, "Client")
      .def_static("connect", [](const std::string& endpoint, const std::string& user) {
        py::gil_scoped_release nogil;
        return std::make_unique<Client>(Client::connect(wire::Endpoint::parse(endpoint), user));
      }, py::arg("endpoint"), py::arg("user") = "")
      .def_property_readonly("user", &Client::user)
      .def_property_readonly("session", &Client::session)
      .def("alloc", [](Client& c, std::size_t size) { return c.alloc(size).addr; })
      .def("free", &Client::free)
      .def("write", [](Client& c, std::uint64_t addr, const py::bytes& data,
                       std::size_t offset) { c.write(addr, offset, as_bytes(data)); },
           py::arg("addr"), py::arg("data"), py::arg("offset") = 0)
      .def("read", [](Client& c, std::uint64_t addr, std::size_t len,
                      std::size_t offset) { return to_bytes(c.read(addr, offset, len)); },
           py::arg("addr"), py::arg("len"), py::arg("offset") = 0)
      .def("run", [](Client& c, const py::list& jobs) {
        auto wj = jobs_of(jobs);
        RunResult r;
        {
          py::gil_scoped_release nogil;
          r = c.run(wj);
        }
        return run_dict(r);
      })
      .def("status", [](Client& c) { return to_py(c.status()); })
      .def("trace", &Client::trace)
      .def("shutdown", &Client::shutdown, py::call_guard<py::gil_scoped_release>());

  m.def("encode_run_request", [](std::uint64_t id, const py::list& jobs) {
    return py::bytes(wire::encode(wire::run_request(id, jobs_of(jobs))));
  });
}
