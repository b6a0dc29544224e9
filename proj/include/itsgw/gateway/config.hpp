#pragma once

#include <charconv>
#include <chrono>
#include <map>

#include "itsgw/gateway/classifier.hpp"

namespace itsgw::gateway {

struct GatewayConfig {
  std::size_t queue_capacity = 1024;
  std::size_t worker_count = 4;
  std::string http_bind = "127.0.0.1:8080";
  std::string backend;      // command line of an external captioning backend
  std::string backend_tcp;  // or host:port of one
  std::chrono::milliseconds backend_timeout{10000};
  bool fallback_to_builtin = true;
  std::string job_log_path = "itsgw-jobs.ndjson";
  std::map<Modality, std::string> checkpoints;
  std::string label_schema;
  bool latency_includes_queue = false;
  std::size_t metrics_window = 100;

  std::size_t caption_stride = 1;
  std::size_t caption_max_frames = 16;
  RefineTask caption_task = RefineTask::summarize;

  std::size_t feedback_window = 100;
  double feedback_threshold = 0.85;
  bool auto_deploy = false;
  std::map<Modality, std::string> retrain_data;
  std::size_t retrain_steps = 200;

  std::map<std::string, std::string> extra;  // profile.* and other namespaced keys

  void check() const {
    if (queue_capacity < 1) fail(errc::invalid_config, "queue_capacity must be at least 1");
    if (worker_count < 1) fail(errc::invalid_config, "worker_count must be at least 1");
    if (backend_timeout.count() <= 0) fail(errc::invalid_config, "backend_timeout_ms must be positive");
    if (!backend.empty() && !backend_tcp.empty()) fail(errc::invalid_config, "set backend or backend_tcp, not both");
    if (metrics_window < 1) fail(errc::invalid_config, "metrics_window must be at least 1");
    if (caption_stride < 1 || caption_max_frames < 1) fail(errc::invalid_config, "caption_stride and caption_max_frames must be at least 1");
    if (feedback_window < 1) fail(errc::invalid_config, "feedback_window must be at least 1");
    if (!(feedback_threshold > 0.0 && feedback_threshold < 1.0)) fail(errc::invalid_config, "feedback_threshold must lie in (0,1)");
  }
};

namespace detail {

inline std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) fail(errc::invalid_config, key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  const auto d = text::detail::parse_double(v);
  if (!d || !std::isfinite(*d)) fail(errc::invalid_config, key + ": expected a number, got '" + v + "'");
  return *d;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(errc::invalid_config, key + ": expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Flat key=value lines; '#' starts a comment line. Relative paths are
/// resolved against `base_dir` when one is given.
inline GatewayConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  GatewayConfig c;
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    return (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
  };
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(errc::invalid_config, "config line " + std::to_string(line_no) + " has no '='");
    const auto key = trim(line.substr(0, eq));
    const auto v = trim(line.substr(eq + 1));
    using namespace detail;
    if (key == "queue_capacity") c.queue_capacity = parse_count(key, v);
    else if (key == "worker_count") c.worker_count = parse_count(key, v);
    else if (key == "http_bind") c.http_bind = v;
    else if (key == "backend") c.backend = v;
    else if (key == "backend_tcp") c.backend_tcp = v;
    else if (key == "backend_timeout_ms") c.backend_timeout = std::chrono::milliseconds(parse_count(key, v));
    else if (key == "fallback_to_builtin") c.fallback_to_builtin = parse_bool(key, v);
    else if (key == "job_log_path") c.job_log_path = path_of(v);
    else if (key.starts_with("checkpoint.")) c.checkpoints[parse_modality(key.substr(11))] = path_of(v);
    else if (key == "label_schema") c.label_schema = path_of(v);
    else if (key == "latency_includes_queue") c.latency_includes_queue = parse_bool(key, v);
    else if (key == "metrics_window") c.metrics_window = parse_count(key, v);
    else if (key == "caption_stride") c.caption_stride = parse_count(key, v);
    else if (key == "caption_max_frames") c.caption_max_frames = parse_count(key, v);
    else if (key == "caption_task") c.caption_task = parse_refine_task(v);
    else if (key == "feedback_window") c.feedback_window = parse_count(key, v);
    else if (key == "feedback_threshold") c.feedback_threshold = parse_real(key, v);
    else if (key == "auto_deploy") c.auto_deploy = parse_bool(key, v);
    else if (key.starts_with("retrain_data.")) c.retrain_data[parse_modality(key.substr(13))] = path_of(v);
    else if (key == "retrain_steps") c.retrain_steps = parse_count(key, v);
    else if (key.starts_with("profile.") && key != "profile.repeat") {
      std::vector<std::string> parts;
      for (const auto& part : split(v, ',')) parts.push_back(path_of(trim(part)));
      c.extra[key] = join(parts, ',');
    } else if (key.find('.') != std::string::npos) c.extra[key] = v;
    else fail(errc::invalid_config, "unknown config key '" + key + "'");
  }
  for (const auto& [m, p] : c.checkpoints)
    if (m == Modality::video) fail(errc::invalid_config, "checkpoint.video is not a thing; video uses the caption chain");
  c.check();
  return c;
}

inline GatewayConfig load_config(const std::string& path) {
  return parse_config(read_text_file(path), std::filesystem::path(path).parent_path());
}

}  // namespace itsgw::gateway
