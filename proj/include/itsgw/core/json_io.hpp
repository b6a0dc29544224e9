#pragma once

#include <string>

#include "itsgw/core/types.hpp"
#include "json.hpp"

namespace itsgw {

using json = nlohmann::json;

inline json to_json(const ClassificationResult& r) {
  return {{"kind", "classification"}, {"class_index", r.class_index}, {"class_name", r.class_name}, {"distribution", r.distribution}};
}

inline json to_json(const CaptionChainResult& r) {
  json caps = json::array();
  for (const auto& c : r.captions) caps.push_back({{"frame", c.frame_index}, {"caption", c.caption}});
  json j{{"kind", "caption"},        {"captions", caps},         {"refined_text", r.refined_text}, {"task", std::string(to_string(r.task))},
         {"provenance", r.provenance}, {"nondeterministic", r.nondeterministic}};
  if (!r.fallback_reason.empty()) j["fallback_reason"] = r.fallback_reason;
  return j;
}

inline json to_json(const RetrainResult& r) {
  json j{{"kind", "retrain"}, {"window_accuracy", r.window_accuracy}, {"action", r.action}};
  if (r.new_accuracy) j["new_accuracy"] = *r.new_accuracy;
  return j;
}

inline json to_json(const JobResult& r) {
  return std::visit([](const auto& v) { return to_json(v); }, r);
}

inline JobResult job_result_from_json(const json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "classification")
      return ClassificationResult{j.at("class_index").get<std::size_t>(), j.at("class_name").get<std::string>(),
                                  j.at("distribution").get<std::vector<double>>()};
    if (kind == "caption") {
      CaptionChainResult r;
      for (const auto& c : j.at("captions")) r.captions.push_back({c.at("frame").get<std::size_t>(), c.at("caption").get<std::string>()});
      r.refined_text = j.at("refined_text").get<std::string>();
      r.task = parse_refine_task(j.at("task").get<std::string>());
      r.provenance = j.at("provenance").get<std::string>();
      r.nondeterministic = j.value("nondeterministic", false);
      r.fallback_reason = j.value("fallback_reason", std::string());
      return r;
    }
    if (kind == "retrain") {
      RetrainResult r{j.at("window_accuracy").get<double>(), j.at("action").get<std::string>(), std::nullopt};
      if (j.contains("new_accuracy")) r.new_accuracy = j["new_accuracy"].get<double>();
      return r;
    }
  } catch (const json::exception& e) {
    fail(errc::corrupt_log, std::string("bad result record: ") + e.what());
  }
  fail(errc::corrupt_log, "unknown result kind");
}

inline std::string_view to_string(JobKind k) noexcept { return k == JobKind::inference ? "inference" : "retrain"; }

inline JobKind parse_job_kind(std::string_view s) {
  if (s == "inference") return JobKind::inference;
  if (s == "retrain") return JobKind::retrain;
  fail(errc::invalid_argument, "unknown job kind '" + std::string(s) + "'");
}

/// Public view of a job, as served by the HTTP API.
inline json to_json(const JobEnvelope& e) {
  json j{{"job_id", e.job_id},
         {"kind", std::string(to_string(e.kind))},
         {"modality", std::string(to_string(e.modality))},
         {"status", std::string(to_string(e.status))},
         {"payload_digest", e.payload_digest},
         {"submitted_at_us", e.submitted_at}};
  if (e.started_at) j["started_at_us"] = *e.started_at;
  if (e.finished_at) j["finished_at_us"] = *e.finished_at;
  if (e.latency_ms) j["latency_ms"] = *e.latency_ms;
  if (e.result) j["result"] = to_json(*e.result);
  if (e.error) j["error"] = {{"code", e.error->code}, {"message", e.error->message}};
  return j;
}

inline json to_json(const MetricsRow& r) {
  json j{{"modality", std::string(to_string(r.modality))}, {"mac_count", r.mac_count}, {"mac_gop", r.mac_gop()},
         {"task", r.task},                                 {"latency_ms", r.latency_ms}, {"line", metrics_row_format(r)}};
  j["accuracy_pct"] = r.accuracy_pct ? json(*r.accuracy_pct) : json(nullptr);
  return j;
}

}  // namespace itsgw
