#include "fos/scenario.hpp"

#include <algorithm>

#include "json.hpp"

namespace fos {

using nlohmann::json;

namespace {

std::uint64_t param_value(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  if (v.is_string()) return parse_number(v.get<std::string>());
  throw Error(Errc::parse, "job parameters must be non-negative integers or numeric strings");
}

JobRequest parse_job(const json& j) {
  JobRequest job;
  if (!j.contains("acc") || !j["acc"].is_string()) {
    throw Error(Errc::parse, "scenario job needs an \"acc\" name");
  }
  job.accname = j["acc"].get<std::string>();
  if (auto it = j.find("params"); it != j.end()) {
    if (!it->is_object()) throw Error(Errc::parse, "job \"params\" must be an object");
    for (auto p = it->begin(); p != it->end(); ++p) job.params[p.key()] = param_value(p.value());
  }
  return job;
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse, std::string("scenario: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::parse, "scenario must be a JSON object");
  Scenario s;
  try {
    s.name = doc.value("name", std::string("unnamed"));
    s.description = doc.value("description", std::string());
    s.fabric = doc.contains("fabric") ? FabricConfig::from_json(doc["fabric"].dump())
                                      : FabricConfig{};
    if (auto it = doc.find("scheduler"); it != doc.end()) {
      const json& sc = *it;
      std::string policy = sc.value("policy", std::string("elastic"));
      if (policy == "elastic") s.scheduler.policy = Policy::elastic;
      else if (policy == "fixed") s.scheduler.policy = Policy::fixed;
      else throw Error(Errc::parse, "unknown policy \"" + policy + "\"");
      std::string rule = sc.value("multi_user_variant", std::string("smallest"));
      if (rule == "smallest") s.scheduler.multi_user_variant = VariantRule::smallest;
      else if (rule == "largest") s.scheduler.multi_user_variant = VariantRule::largest;
      else throw Error(Errc::parse, "unknown multi_user_variant \"" + rule + "\"");
      s.scheduler.decision_overhead_us =
          sc.value("decision_overhead_us", s.scheduler.decision_overhead_us);
      if (s.scheduler.decision_overhead_us < 0) {
        throw Error(Errc::invalid, "decision_overhead_us must be non-negative");
      }
    }
    if (doc.contains("shell")) {
      s.shell = parse_shell(doc["shell"].dump());
    } else if (doc.contains("shell_file")) {
      s.shell = parse_shell(read_text_file(base_dir / doc["shell_file"].get<std::string>()));
    } else {
      throw Error(Errc::parse, "scenario needs \"shell\" or \"shell_file\"");
    }
    for (const json& a : doc.value("accelerators", json::array())) {
      s.accelerators.push_back(parse_accelerator(a.dump()));
    }
    for (const json& a : doc.value("adaptors", json::array())) {
      s.adaptors.push_back({a.at("region").get<std::string>(), a.at("kind").get<std::string>()});
    }
    for (const json& sub : doc.value("submissions", json::array())) {
      Submission submission;
      submission.user = sub.at("user").get<std::string>();
      submission.at_us = sub.value("at_us", Micros{0});
      if (submission.at_us < 0) throw Error(Errc::invalid, "at_us must be non-negative");
      if (sub.contains("jobs")) {
        for (const json& j : sub["jobs"]) submission.jobs.push_back(parse_job(j));
      } else {
        JobRequest job = parse_job(sub);
        auto count = sub.value("count", 1);
        if (count < 1) throw Error(Errc::invalid, "submission count must be positive");
        submission.jobs.assign(static_cast<std::size_t>(count), job);
      }
      s.submissions.push_back(std::move(submission));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("scenario: ") + e.what());
  }
  std::stable_sort(s.submissions.begin(), s.submissions.end(),
                   [](const Submission& a, const Submission& b) { return a.at_us < b.at_us; });
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  try {
    return parse_scenario(read_text_file(path), path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::size_t job_count(const Scenario& scenario) {
  std::size_t n = 0;
  for (const auto& s : scenario.submissions) n += s.jobs.size();
  return n;
}

}  // namespace fos
