#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "itsgw/core/error.hpp"

namespace itsgw {

// ---------------------------------------------------------------------------
// Label schemas

enum class TaskKind { classification, captioning };

constexpr std::string_view to_string(TaskKind kind) noexcept {
  return kind == TaskKind::classification ? "Classification" : "Captioning";
}

struct LabelSchema {
  std::vector<std::string> class_names;
  TaskKind task_kind = TaskKind::classification;

  std::size_t size() const noexcept { return class_names.size(); }

  void check() const {
    if (task_kind == TaskKind::classification && class_names.size() < 2)
      fail(errc::invalid_config, "classification schema needs at least two classes");
    if (task_kind == TaskKind::captioning && !class_names.empty())
      fail(errc::invalid_config, "captioning schema must not name classes");
    std::set<std::string> seen;
    for (const auto& name : class_names) {
      if (name.empty()) fail(errc::invalid_config, "empty class name");
      if (!seen.insert(name).second) fail(errc::invalid_config, "duplicate class name '" + name + "'");
    }
  }

  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < class_names.size(); ++i)
      if (class_names[i] == name) return i;
    return std::nullopt;
  }

  static LabelSchema demo() { return {{"normal", "warning", "fault"}, TaskKind::classification}; }
  static LabelSchema captioning() { return {{}, TaskKind::captioning}; }
};

// ---------------------------------------------------------------------------
// Modality inputs

enum class Modality { time_series, audio, video };

constexpr std::string_view to_string(Modality m) noexcept {
  switch (m) {
    case Modality::time_series: return "time_series";
    case Modality::audio: return "audio";
    case Modality::video: return "video";
  }
  return "?";
}

inline Modality parse_modality(std::string_view s) {
  if (s == "time_series") return Modality::time_series;
  if (s == "audio") return Modality::audio;
  if (s == "video") return Modality::video;
  fail(errc::invalid_argument, "unknown modality '" + std::string(s) + "'");
}

inline constexpr Modality all_modalities[] = {Modality::time_series, Modality::audio, Modality::video};

enum class FieldKind { numeric, categorical };

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::numeric;

  bool operator==(const FieldSpec&) const = default;
};

using FieldValue = std::variant<double, std::string>;

/// Expected shape of a tabular record plus the class count labels index into.
struct RecordSchema {
  std::vector<FieldSpec> fields;
  std::size_t class_count = 0;
};

struct SensorRecord {
  std::vector<FieldSpec> fields;
  std::vector<FieldValue> values;
  std::optional<std::size_t> label;
};

inline constexpr std::uint32_t kAudioSampleRate = 16000;

struct AudioClip {
  std::vector<std::int16_t> samples;
  std::uint32_t sample_rate_hz = kAudioSampleRate;
  std::optional<std::size_t> label;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

struct FrameSequence {
  std::vector<GrayImage> frames;
  std::string source_id;
};

using ModalityInput = std::variant<SensorRecord, AudioClip, FrameSequence>;

inline Modality modality_of(const ModalityInput& input) {
  switch (input.index()) {
    case 0: return Modality::time_series;
    case 1: return Modality::audio;
    default: return Modality::video;
  }
}

/// Checks a record against the expected schema. Throws on the first violation.
inline void validate_record(const RecordSchema& schema, const SensorRecord& record) {
  if (record.fields.size() != schema.fields.size() || record.values.size() != schema.fields.size())
    fail(errc::schema_mismatch, "expected " + std::to_string(schema.fields.size()) + " fields, got " +
                                    std::to_string(record.values.size()));
  for (std::size_t i = 0; i < schema.fields.size(); ++i) {
    const auto& spec = schema.fields[i];
    if (record.fields[i] != spec) fail(errc::schema_mismatch, "field " + std::to_string(i) + " is not '" + spec.name + "'");
    const auto& value = record.values[i];
    if (spec.kind == FieldKind::numeric) {
      const double* num = std::get_if<double>(&value);
      if (num == nullptr) fail(errc::schema_mismatch, "field '" + spec.name + "' must be numeric");
      if (!std::isfinite(*num)) fail(errc::non_finite_value, "field '" + spec.name + "' is not finite");
    } else if (!std::holds_alternative<std::string>(value)) {
      fail(errc::schema_mismatch, "field '" + spec.name + "' must be categorical");
    }
  }
  if (record.label && *record.label >= schema.class_count)
    fail(errc::label_out_of_range, "label " + std::to_string(*record.label) + " >= " + std::to_string(schema.class_count));
}

// ---------------------------------------------------------------------------
// Jobs

enum class JobStatus { queued, running, succeeded, failed };
enum class JobEvent { start, finish_ok, finish_err };

constexpr std::string_view to_string(JobStatus s) noexcept {
  switch (s) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::succeeded: return "succeeded";
    case JobStatus::failed: return "failed";
  }
  return "?";
}

inline JobStatus parse_job_status(std::string_view s) {
  if (s == "queued") return JobStatus::queued;
  if (s == "running") return JobStatus::running;
  if (s == "succeeded") return JobStatus::succeeded;
  if (s == "failed") return JobStatus::failed;
  fail(errc::invalid_argument, "unknown job status '" + std::string(s) + "'");
}

constexpr bool is_terminal(JobStatus s) noexcept { return s == JobStatus::succeeded || s == JobStatus::failed; }

inline JobStatus job_transition(JobStatus current, JobEvent event) {
  if (current == JobStatus::queued && event == JobEvent::start) return JobStatus::running;
  if (current == JobStatus::running && event == JobEvent::finish_ok) return JobStatus::succeeded;
  if (current == JobStatus::running && event == JobEvent::finish_err) return JobStatus::failed;
  fail(errc::illegal_transition, "no transition out of '" + std::string(to_string(current)) + "' for this event");
}

/// Integer microseconds on the monotonic clock.
using Micros = std::int64_t;

inline Micros monotonic_now_us() {
  using namespace std::chrono;
  return duration_cast<microseconds>(steady_clock::now().time_since_epoch()).count();
}

inline Micros wall_now_us() {
  using namespace std::chrono;
  return duration_cast<microseconds>(system_clock::now().time_since_epoch()).count();
}

struct ClassificationResult {
  std::size_t class_index = 0;
  std::string class_name;
  std::vector<double> distribution;

  bool operator==(const ClassificationResult&) const = default;
};

enum class RefineTask { summarize, translate_passthrough };

constexpr std::string_view to_string(RefineTask t) noexcept {
  return t == RefineTask::summarize ? "summarize" : "translate_passthrough";
}

inline RefineTask parse_refine_task(std::string_view s) {
  if (s == "summarize") return RefineTask::summarize;
  if (s == "translate_passthrough") return RefineTask::translate_passthrough;
  fail(errc::invalid_argument, "unknown refine task '" + std::string(s) + "'");
}

struct FrameCaption {
  std::size_t frame_index = 0;
  std::string caption;

  bool operator==(const FrameCaption&) const = default;
};

struct CaptionChainResult {
  std::vector<FrameCaption> captions;
  std::string refined_text;
  RefineTask task = RefineTask::summarize;
  std::string provenance;  // "builtin" or "external:<backend id>"
  bool nondeterministic = false;
  std::string fallback_reason;  // set when an external backend failed and builtin took over

  bool operator==(const CaptionChainResult&) const = default;
};

/// Outcome of a retraining job triggered by the feedback loop.
struct RetrainResult {
  double window_accuracy = 0.0;
  std::string action;  // "advisory", "candidate_written" or "deployed"
  std::optional<double> new_accuracy;

  bool operator==(const RetrainResult&) const = default;
};

using JobResult = std::variant<ClassificationResult, CaptionChainResult, RetrainResult>;

struct JobError {
  std::string code;
  std::string message;

  bool operator==(const JobError&) const = default;
};

enum class JobKind { inference, retrain };

struct JobEnvelope {
  std::string job_id;
  JobKind kind = JobKind::inference;
  Modality modality = Modality::time_series;
  std::shared_ptr<const ModalityInput> payload;
  std::string payload_digest;
  JobStatus status = JobStatus::queued;
  Micros submitted_at = 0;
  std::optional<Micros> started_at;
  std::optional<Micros> finished_at;
  std::optional<double> latency_ms;
  std::optional<JobResult> result;
  std::optional<JobError> error;
};

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRow {
  Modality modality = Modality::time_series;
  std::optional<double> accuracy_pct;
  std::uint64_t mac_count = 0;
  std::string task;
  double latency_ms = 0.0;

  double mac_gop() const noexcept { return static_cast<double>(mac_count) * 1e-9; }
};

namespace detail {

inline std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

}  // namespace detail

/// GOP with one decimal; values that would round to zero get as many
/// decimals as needed to show one significant digit.
inline std::string format_gop(double gop) {
  if (gop == 0.0) return "0.0";
  int decimals = 1;
  while (decimals < 17 && std::fabs(std::stod(detail::format_fixed(gop, decimals))) == 0.0) ++decimals;
  return detail::format_fixed(gop, decimals);
}

/// One tab-separated report line. Rows without a labeled evaluation show
/// "-" in the accuracy column.
inline std::string metrics_row_format(const MetricsRow& row) {
  std::string out(to_string(row.modality));
  out += '\t';
  out += row.accuracy_pct ? detail::format_fixed(*row.accuracy_pct, 2) + "%" : std::string("-");
  out += '\t';
  out += format_gop(row.mac_gop());
  out += '\t';
  out += row.task;
  out += '\t';
  out += detail::format_fixed(row.latency_ms, 1);
  return out;
}

}  // namespace itsgw
