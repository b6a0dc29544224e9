#pragma once

#include <atomic>
#include <condition_variable>
#include <iostream>
#include <thread>

#include "itsgw/fusion/fusion.hpp"
#include "itsgw/gateway/config.hpp"
#include "itsgw/gateway/job_log.hpp"
#include "itsgw/gateway/metrics.hpp"
#include "itsgw/gateway/payload.hpp"
#include "itsgw/gateway/queue.hpp"
#include "itsgw/model/macs.hpp"
#include "itsgw/visual/backend_client.hpp"

namespace itsgw::gateway {

struct JobParams {
  std::optional<std::size_t> label;  // ground truth, feeds the feedback loop
  std::optional<RefineTask> task;    // video only
};

struct FusedView {
  fusion::FusedPrediction prediction;
  std::string class_name;
  std::vector<double> weights;
};

/// Snapshot of the classifiers a gateway serves. Missing modalities reject
/// their jobs at submit time.
using ClassifierSet = std::map<Modality, std::shared_ptr<const Classifier>>;

inline std::uint64_t classifier_macs(const Classifier& c) { return model::count_macs(c.model.config(), c.model.config().max_len); }

class Gateway {
 public:
  /// Loads checkpoints, the label schema and the captioning backend named by
  /// the config.
  explicit Gateway(GatewayConfig cfg) : Gateway(cfg, load_classifiers(cfg), make_captioner(cfg)) {}

  Gateway(GatewayConfig cfg, ClassifierSet classifiers, std::unique_ptr<visual::Captioner> captioner)
      : cfg_(std::move(cfg)),
        classifiers_(std::move(classifiers)),
        captioner_(captioner ? std::move(captioner) : std::make_unique<visual::BuiltinCaptioner>()),
        queue_(cfg_.queue_capacity),
        metrics_(cfg_.metrics_window),
        feedback_(cfg_.feedback_window, cfg_.feedback_threshold),
        rng_(std::random_device{}()) {
    cfg_.check();
    for (const auto& [m, c] : classifiers_) {
      if (!c || c->modality != m) fail(errc::invalid_config, "classifier registered under the wrong modality");
      metrics_.set_profile(m, {c->eval_accuracy, classifier_macs(*c), std::string(to_string(TaskKind::classification))});
    }
    metrics_.set_profile(Modality::video, {std::nullopt, 0, std::string(to_string(TaskKind::captioning))});
    recover();
  }

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;
  ~Gateway() { stop(); }

  void start() {
    std::lock_guard lock(lifecycle_mu_);
    if (!workers_.empty()) return;
    for (std::size_t i = 0; i < cfg_.worker_count; ++i) workers_.emplace_back([this] { worker_loop(); });
  }

  /// Stops accepting work; workers finish what is queued, then exit.
  void stop() {
    std::lock_guard lock(lifecycle_mu_);
    queue_.close();
    for (auto& t : workers_)
      if (t.joinable()) t.join();
    workers_.clear();
  }

  std::string submit(ModalityInput input, JobParams params = {}) {
    const Modality m = modality_of(input);
    validate(input, params);
    JobEnvelope env;
    env.kind = JobKind::inference;
    env.modality = m;
    env.payload_digest = payload_digest(input);
    env.payload = std::make_shared<const ModalityInput>(std::move(input));
    return enqueue(std::move(env), params);
  }

  JobEnvelope poll(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) fail(errc::not_found, "no job " + id);
    return it->second.env;
  }

  /// Blocks until no accepted job is still queued or running.
  bool wait_idle(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return idle_cv_.wait_for(lock, timeout, [&] { return pending_ == 0; });
  }

  std::vector<MetricsRow> metrics() const { return metrics_.report(); }
  std::size_t queue_depth() const { return queue_.size(); }
  std::size_t queue_high_water() const { return queue_.high_water(); }
  std::size_t worker_count() const noexcept { return cfg_.worker_count; }
  const GatewayConfig& config() const noexcept { return cfg_; }
  const ReplayResult& recovered() const noexcept { return recovered_; }
  MetricsCollector& metrics_collector() noexcept { return metrics_; }

  std::shared_ptr<const Classifier> classifier(Modality m) const {
    std::lock_guard lock(models_mu_);
    const auto it = classifiers_.find(m);
    return it == classifiers_.end() ? nullptr : it->second;
  }

  std::vector<std::string> job_ids() const {
    std::lock_guard lock(mu_);
    return order_;
  }

  /// Late fusion over finished classification jobs. Without explicit weights
  /// each job is weighted by its modality's last evaluation accuracy.
  FusedView fuse_jobs(const std::vector<std::string>& ids, std::optional<std::vector<double>> weights = std::nullopt) {
    if (ids.empty()) fail(errc::invalid_argument, "no jobs to fuse");
    if (weights && weights->size() != ids.size()) fail(errc::invalid_argument, "one weight per job is required");
    std::vector<fusion::ModalityPosterior> in;
    std::optional<LabelSchema> labels;
    std::map<Modality, double> acc;
    for (const auto& id : ids) {
      const auto env = poll(id);
      if (env.status != JobStatus::succeeded || !env.result || !std::holds_alternative<ClassificationResult>(*env.result))
        fail(errc::invalid_argument, "job " + id + " has no classification result to fuse");
      const auto c = classifier(env.modality);
      if (!c) fail(errc::invalid_argument, "no classifier for " + std::string(to_string(env.modality)));
      if (labels && labels->class_names != c->labels.class_names)
        fail(errc::schema_mismatch, "jobs were classified under different label schemas");
      labels = c->labels;
      acc[env.modality] = c->eval_accuracy.value_or(0.0);
      in.push_back({env.modality, std::get<ClassificationResult>(*env.result).distribution, 1.0});
    }
    if (weights) {
      for (std::size_t i = 0; i < in.size(); ++i) in[i].weight = (*weights)[i];
    } else {
      const auto w = fusion::accuracy_weights(acc);
      for (auto& p : in) p.weight = w.at(p.modality);
    }
    FusedView out;
    out.prediction = fusion::fuse_late(in);
    out.class_name = labels->class_names.at(out.prediction.class_index);
    for (const auto& p : in) out.weights.push_back(p.weight);
    return out;
  }

  static ClassifierSet load_classifiers(const GatewayConfig& cfg) {
    ClassifierSet out;
    std::optional<LabelSchema> schema;
    if (!cfg.label_schema.empty()) schema = load_label_schema(cfg.label_schema);
    for (const auto& [m, path] : cfg.checkpoints) {
      auto c = load_classifier(path);
      if (c->modality != m) fail(errc::invalid_config, path + " holds a " + std::string(to_string(c->modality)) + " model");
      if (schema && schema->class_names != c->labels.class_names)
        fail(errc::invalid_config, path + " was trained on classes " + join(c->labels.class_names, ',') + ", label schema says " +
                                       join(schema->class_names, ','));
      out[m] = std::move(c);
    }
    return out;
  }

  static std::unique_ptr<visual::Captioner> make_captioner(const GatewayConfig& cfg) {
    if (cfg.backend.empty() && cfg.backend_tcp.empty()) return std::make_unique<visual::BuiltinCaptioner>();
    return std::make_unique<visual::BackendClient>(visual::BackendEndpoint{cfg.backend, cfg.backend_tcp}, cfg.backend_timeout);
  }

 private:
  struct Job {
    JobEnvelope env;
    JobParams params;
    double retrain_accuracy = 0.0;
  };

  void validate(const ModalityInput& input, const JobParams& params) const {
    const Modality m = modality_of(input);
    try {
      if (m == Modality::video) {
        const auto& seq = std::get<FrameSequence>(input);
        if (seq.frames.empty()) fail(errc::validation_failed, "no frames");
        visual::check_frames(seq);
        for (const auto& f : seq.frames)
          if (f.width < visual::kMinImageSide || f.height < visual::kMinImageSide)
            fail(errc::image_too_small, "frames must be at least 8x8");
        if (params.label) fail(errc::validation_failed, "video jobs take no label");
        return;
      }
      const auto c = classifier(m);
      if (!c) fail(errc::validation_failed, "no " + std::string(to_string(m)) + " model is loaded");
      if (params.label && *params.label >= c->labels.size()) fail(errc::label_out_of_range, "label out of range");
      if (m == Modality::time_series) {
        validate_record(c->record_schema, std::get<SensorRecord>(input));
      } else {
        const auto& clip = std::get<AudioClip>(input);
        if (clip.sample_rate_hz != kAudioSampleRate) fail(errc::unsupported_rate, "clips must be 16 kHz");
        if (clip.samples.empty()) fail(errc::validation_failed, "empty clip");
      }
    } catch (const error& e) {
      if (e.code() == errc::validation_failed) throw;
      fail(errc::validation_failed, std::string(to_string(e.code())) + ": " + e.message());
    }
  }

  std::string next_id() {
    const auto n = ++counter_;
    char buf[48];
    std::snprintf(buf, sizeof buf, "j%06llu-%06llx", static_cast<unsigned long long>(n), static_cast<unsigned long long>(rng_() & 0xffffff));
    return buf;
  }

  std::string enqueue(JobEnvelope env, const JobParams& params, double retrain_accuracy = 0.0) {
    std::lock_guard lock(mu_);
    env.job_id = next_id();
    env.status = JobStatus::queued;
    env.submitted_at = monotonic_now_us();
    // the queued line must precede any running line, so both happen under mu_
    if (!queue_.try_push(env.job_id))
      fail(errc::queue_full, "queue holds " + std::to_string(queue_.capacity()) + " jobs; retry later");
    log_->append(queued_line(env), false);
    const auto id = env.job_id;
    jobs_.emplace(id, Job{std::move(env), params, retrain_accuracy});
    order_.push_back(id);
    ++pending_;
    return id;
  }

  void worker_loop() {
    while (auto id = queue_.pop()) {
      try {
        execute(*id);
      } catch (const std::exception& e) {
        std::cerr << "itsgw: worker error on " << *id << ": " << e.what() << "\n";
      }
    }
  }

  void execute(const std::string& id) {
    std::shared_ptr<const ModalityInput> payload;
    JobKind kind;
    Modality modality;
    JobParams params;
    double retrain_accuracy;
    Micros submitted;
    {
      std::lock_guard lock(mu_);
      auto& job = jobs_.at(id);
      job.env.status = job_transition(job.env.status, JobEvent::start);
      job.env.started_at = std::max(monotonic_now_us(), job.env.submitted_at);
      log_->append(running_line(job.env), false);
      payload = job.env.payload;
      kind = job.env.kind;
      modality = job.env.modality;
      params = job.params;
      retrain_accuracy = job.retrain_accuracy;
      submitted = job.env.submitted_at;
    }

    std::optional<JobResult> result;
    std::optional<JobError> err;
    try {
      result = kind == JobKind::retrain ? JobResult(run_retrain(modality, retrain_accuracy)) : run_inference(*payload, params);
    } catch (const error& e) {
      err = JobError{std::string(to_string(e.code())), e.message()};
    } catch (const std::exception& e) {
      err = JobError{"Internal", e.what()};
    }

    // feedback before the job counts as done, so a triggered retrain is
    // already queued when waiters see the gateway go idle
    if (result && kind == JobKind::inference && params.label)
      if (const auto* cr = std::get_if<ClassificationResult>(&*result))
        if (auto ev = feedback_.record(modality, cr->class_index == *params.label)) submit_retrain(*ev);

    std::lock_guard lock(mu_);
    auto& job = jobs_.at(id);
    job.env.status = job_transition(job.env.status, result ? JobEvent::finish_ok : JobEvent::finish_err);
    job.env.finished_at = std::max(monotonic_now_us(), *job.env.started_at);
    const Micros from = cfg_.latency_includes_queue ? submitted : *job.env.started_at;
    const double latency = static_cast<double>(*job.env.finished_at - from) / 1000.0;
    job.env.latency_ms = latency;
    job.env.result = std::move(result);
    job.env.error = std::move(err);
    job.env.payload.reset();
    log_->append(terminal_line(job.env), true);
    if (job.env.status == JobStatus::succeeded && kind == JobKind::inference) metrics_.record_latency(modality, latency);
    if (--pending_ == 0) idle_cv_.notify_all();
  }

  JobResult run_inference(const ModalityInput& input, const JobParams& params) {
    const Modality m = modality_of(input);
    if (m == Modality::video) {
      visual::ChainOptions opt{params.task.value_or(cfg_.caption_task), cfg_.caption_stride, cfg_.caption_max_frames, cfg_.fallback_to_builtin};
      return visual::run_caption_chain(std::get<FrameSequence>(input), *captioner_, opt);
    }
    const auto c = classifier(m);
    if (!c) fail(errc::invalid_config, "model for " + std::string(to_string(m)) + " was unloaded");
    return c->classify(input);
  }

  void submit_retrain(const fusion::RetrainEvent& ev) {
    for (Modality m : ev.modalities) {
      JobEnvelope env;
      env.kind = JobKind::retrain;
      env.modality = m;
      const std::string tag = "retrain\n" + std::string(to_string(m)) + "\n" + itsgw::detail::format_fixed(ev.window_accuracy, 6);
      env.payload_digest = "sha256:" + sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(tag.data()), tag.size()));
      try {
        enqueue(std::move(env), {}, ev.window_accuracy);
      } catch (const error& e) {
        std::cerr << "itsgw: retrain for " << to_string(m) << " not queued: " << e.what() << "\n";
      }
    }
  }

  /// Advisory unless retraining data is configured; then a fine-tuned
  /// candidate is written next to the checkpoint and swapped in only with
  /// auto_deploy.
  RetrainResult run_retrain(Modality m, double window_accuracy) {
    RetrainResult r{window_accuracy, "advisory", std::nullopt};
    const auto data = cfg_.retrain_data.find(m);
    const auto base = classifier(m);
    if (data == cfg_.retrain_data.end() || !base) return r;
    TrainSpec spec;
    spec.max_steps = cfg_.retrain_steps;
    spec.seed = counter_.load();
    auto outcome = fine_tune(*base, data->second, spec);
    r.new_accuracy = outcome.classifier->eval_accuracy;
    if (const auto ck = cfg_.checkpoints.find(m); ck != cfg_.checkpoints.end()) {
      save_classifier(*outcome.classifier, ck->second + ".candidate");
      r.action = "candidate_written";
    }
    if (cfg_.auto_deploy) {
      {
        std::lock_guard lock(models_mu_);
        classifiers_[m] = outcome.classifier;
      }
      if (r.new_accuracy) metrics_.set_accuracy(m, *r.new_accuracy);
      r.action = "deployed";
    }
    return r;
  }

  /// Rebuilds the table from the log. Jobs the previous process never
  /// finished cannot be re-run (payloads are not persisted), so they are
  /// failed{interrupted} and the log is completed accordingly.
  void recover() {
    recovered_ = replay_log(cfg_.job_log_path);
    log_ = std::make_unique<JobLogWriter>(cfg_.job_log_path,
                                          recovered_.torn_tail ? std::optional<std::uint64_t>(recovered_.committed_bytes) : std::nullopt);
    counter_ = recovered_.max_counter;
    const Micros now = monotonic_now_us();
    for (const auto& id : recovered_.order) {
      JobEnvelope env = recovered_.jobs.at(id);
      const bool was_running = std::find(recovered_.interrupted.begin(), recovered_.interrupted.end(), id) != recovered_.interrupted.end();
      if (env.status == JobStatus::queued) {
        env.status = JobStatus::running;
        env.started_at = std::max(now, env.submitted_at);
        log_->append(running_line(env), false);
        fail_interrupted(env, now);
      } else if (was_running) {
        fail_interrupted(env, now);
      }
      jobs_.emplace(id, Job{std::move(env), {}, 0.0});
      order_.push_back(id);
    }
  }

  void fail_interrupted(JobEnvelope& env, Micros now) {
    env.status = JobStatus::failed;
    env.finished_at = std::max(now, env.started_at.value_or(env.submitted_at));
    env.error = JobError{std::string(to_string(errc::interrupted)), std::string(kInterruptedMessage)};
    log_->append(terminal_line(env), true);
  }

  GatewayConfig cfg_;
  mutable std::mutex models_mu_;
  ClassifierSet classifiers_;
  std::unique_ptr<visual::Captioner> captioner_;
  BoundedQueue<std::string> queue_;
  MetricsCollector metrics_;
  fusion::FeedbackMonitor feedback_;

  mutable std::mutex mu_;  // job table, id generation, log ordering
  std::condition_variable idle_cv_;
  std::map<std::string, Job> jobs_;
  std::vector<std::string> order_;
  std::size_t pending_ = 0;
  std::atomic<std::uint64_t> counter_{0};
  std::mt19937_64 rng_;
  std::unique_ptr<JobLogWriter> log_;
  ReplayResult recovered_;

  std::mutex lifecycle_mu_;
  std::vector<std::thread> workers_;
};

}  // namespace itsgw::gateway
