#pragma once

// Append-only NDJSON job log. One line per state change:
//   {"job_id", "event": queued|running|succeeded|failed, "ts_us", "payload_digest", ...}
// queued lines also carry kind, modality and wall_us; terminal lines carry
// latency_ms and result or error. Terminal lines are fsynced.

#include <fcntl.h>
#include <unistd.h>

#include <map>
#include <mutex>

#include "itsgw/core/json_io.hpp"

namespace itsgw::gateway {

inline json queued_line(const JobEnvelope& e) {
  return {{"job_id", e.job_id},
          {"event", "queued"},
          {"ts_us", e.submitted_at},
          {"wall_us", wall_now_us()},
          {"kind", std::string(to_string(e.kind))},
          {"modality", std::string(to_string(e.modality))},
          {"payload_digest", e.payload_digest}};
}

inline json running_line(const JobEnvelope& e) {
  return {{"job_id", e.job_id}, {"event", "running"}, {"ts_us", e.started_at.value_or(0)}, {"payload_digest", e.payload_digest}};
}

inline json terminal_line(const JobEnvelope& e) {
  json j{{"job_id", e.job_id},
         {"event", std::string(to_string(e.status))},
         {"ts_us", e.finished_at.value_or(0)},
         {"payload_digest", e.payload_digest}};
  if (e.latency_ms) j["latency_ms"] = *e.latency_ms;
  if (e.result) j["result"] = to_json(*e.result);
  if (e.error) j["error"] = {{"code", e.error->code}, {"message", e.error->message}};
  return j;
}

class JobLogWriter {
 public:
  /// Opens for appending. `keep_bytes`, when given, first truncates the file
  /// to that length so a torn tail from a crash is not glued to new lines.
  explicit JobLogWriter(const std::string& path, std::optional<std::uint64_t> keep_bytes = std::nullopt) : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(errc::io_error, "cannot open job log " + path);
    if (keep_bytes && ::ftruncate(fd_, static_cast<off_t>(*keep_bytes)) != 0) {
      ::close(fd_);
      fail(errc::io_error, "cannot truncate job log " + path);
    }
  }
  JobLogWriter(const JobLogWriter&) = delete;
  JobLogWriter& operator=(const JobLogWriter&) = delete;
  ~JobLogWriter() {
    if (fd_ >= 0) ::close(fd_);
  }

  void append(const json& record, bool sync) {
    const std::string line = record.dump() + "\n";
    std::lock_guard lock(mu_);
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail(errc::io_error, "job log write failed for " + path_);
      off += static_cast<std::size_t>(n);
    }
    if (sync && ::fsync(fd_) != 0) fail(errc::io_error, "fsync failed for " + path_);
  }

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  int fd_ = -1;
  std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Replay

inline constexpr std::string_view kInterruptedMessage = "job was running when the service stopped";

struct ReplayResult {
  std::map<std::string, JobEnvelope> jobs;
  std::vector<std::string> order;  // first-seen order
  std::vector<std::string> interrupted;
  std::uint64_t committed_bytes = 0;  // up to and including the last newline
  bool torn_tail = false;
  std::uint64_t max_counter = 0;  // highest numeric part of a "j<digits>-..." id
};

namespace detail {

inline std::uint64_t id_counter(const std::string& id) {
  if (id.size() < 2 || id[0] != 'j') return 0;
  std::uint64_t v = 0;
  std::from_chars(id.data() + 1, id.data() + id.size(), v);
  return v;
}

inline void apply_line(ReplayResult& r, const json& j) {
  const auto id = j.at("job_id").get<std::string>();
  const auto event = j.at("event").get<std::string>();
  const auto ts = j.at("ts_us").get<Micros>();
  if (event == "queued") {
    if (r.jobs.count(id)) fail(errc::corrupt_log, "job " + id + " queued twice");
    JobEnvelope e;
    e.job_id = id;
    e.kind = parse_job_kind(j.at("kind").get<std::string>());
    e.modality = parse_modality(j.at("modality").get<std::string>());
    e.payload_digest = j.value("payload_digest", "");
    e.submitted_at = ts;
    r.jobs.emplace(id, std::move(e));
    r.order.push_back(id);
    r.max_counter = std::max(r.max_counter, id_counter(id));
    return;
  }
  const auto it = r.jobs.find(id);
  if (it == r.jobs.end()) fail(errc::corrupt_log, "event '" + event + "' for unknown job " + id);
  auto& e = it->second;
  if (event == "running") {
    e.status = job_transition(e.status, JobEvent::start);
    e.started_at = ts;
  } else if (event == "succeeded" || event == "failed") {
    e.status = job_transition(e.status, event == "succeeded" ? JobEvent::finish_ok : JobEvent::finish_err);
    e.finished_at = ts;
    if (j.contains("latency_ms")) e.latency_ms = j["latency_ms"].get<double>();
    if (event == "succeeded") {
      e.result = job_result_from_json(j.at("result"));
    } else {
      const auto& err = j.at("error");
      e.error = JobError{err.at("code").get<std::string>(), err.at("message").get<std::string>()};
    }
  } else {
    fail(errc::corrupt_log, "unknown event '" + event + "'");
  }
}

}  // namespace detail

/// Rebuilds the job table from log text. Only newline-terminated lines count;
/// anything after the last newline is a torn write and is skipped. A bad
/// committed line raises CorruptLog. Jobs left running end up
/// failed{Interrupted}.
inline ReplayResult replay_log_text(std::string_view text) {
  ReplayResult r;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      r.torn_tail = true;
      break;
    }
    ++line_no;
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    r.committed_bytes = pos;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      detail::apply_line(r, json::parse(line));
    } catch (const json::exception& e) {
      fail(errc::corrupt_log, "job log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const error& e) {
      if (e.code() == errc::corrupt_log) throw;
      fail(errc::corrupt_log, "job log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const auto& id : r.order) {
    auto& e = r.jobs.at(id);
    if (e.status != JobStatus::running) continue;
    e.status = JobStatus::failed;
    e.error = JobError{std::string(to_string(errc::interrupted)), std::string(kInterruptedMessage)};
    r.interrupted.push_back(id);
  }
  return r;
}

/// A missing file replays as empty.
inline ReplayResult replay_log(const std::string& path) {
  if (!std::filesystem::exists(path)) return {};
  return replay_log_text(read_text_file(path));
}

}  // namespace itsgw::gateway
