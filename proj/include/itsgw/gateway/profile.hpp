#pragma once

// `itsgw profile`: the metrics report, produced either from a fixture file of
// recorded measurements or by pushing labeled data through a live gateway.
//
// Fixture (profile.fixture=<json>):
//   {"window": 100,
//    "rows": [{"modality": "time_series", "accuracy": 0.9448, "mac_count": 1800000000,
//              "task": "Classification", "latencies_ms": [11.5, ...]}, ...]}
// "mac_count" may be replaced by "model": {"layers", "d_model", "d_ff", "n_classes", "seq_len"}.
//
// Live: profile.time_series.data=<csv>, profile.audio.data=<manifest>,
// profile.video.frames=<dir>[,<dir>...], profile.repeat=<n>.

#include "itsgw/gateway/gateway.hpp"

namespace itsgw::gateway {

inline std::vector<MetricsRow> profile_fixture(const json& fx) {
  try {
    MetricsCollector mc(fx.value("window", std::size_t{100}));
    for (const auto& r : fx.at("rows")) {
      const Modality m = parse_modality(r.at("modality").get<std::string>());
      ModalityProfile p;
      if (r.contains("accuracy") && !r["accuracy"].is_null()) p.accuracy = r["accuracy"].get<double>();
      if (r.contains("mac_count")) {
        p.mac_count = r["mac_count"].get<std::uint64_t>();
      } else if (r.contains("model")) {
        const auto& md = r["model"];
        p.mac_count = model::count_macs(md.at("layers").get<std::size_t>(), md.at("d_model").get<std::size_t>(),
                                        md.at("d_ff").get<std::size_t>(), md.at("n_classes").get<std::size_t>(),
                                        md.at("seq_len").get<std::size_t>());
      }
      p.task = r.value("task", std::string(to_string(m == Modality::video ? TaskKind::captioning : TaskKind::classification)));
      mc.set_profile(m, p);
      for (double ms : r.at("latencies_ms").get<std::vector<double>>()) {
        if (!(ms >= 0.0)) fail(errc::invalid_argument, "latencies must be non-negative");
        mc.record_latency(m, ms);
      }
    }
    return mc.report();
  } catch (const json::exception& e) {
    fail(errc::invalid_config, std::string("bad profile fixture: ") + e.what());
  }
}

namespace detail {

inline std::string submit_retrying(Gateway& gw, ModalityInput input, JobParams params) {
  for (;;) {
    try {
      return gw.submit(input, params);
    } catch (const error& e) {
      if (e.code() != errc::queue_full) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  }
}

}  // namespace detail

inline std::vector<MetricsRow> profile_live(Gateway& gw) {
  const auto& extra = gw.config().extra;
  auto get = [&](const std::string& k) -> std::string {
    const auto it = extra.find(k);
    return it == extra.end() ? std::string() : it->second;
  };
  const std::size_t repeat = get("profile.repeat").empty() ? 1 : detail::parse_count("profile.repeat", get("profile.repeat"));
  gw.start();

  for (Modality m : {Modality::time_series, Modality::audio}) {
    const auto data = get("profile." + std::string(to_string(m)) + ".data");
    if (data.empty()) continue;
    const auto c = gw.classifier(m);
    if (!c) fail(errc::invalid_config, "profile data given for " + std::string(to_string(m)) + " but no checkpoint");
    gw.metrics_collector().set_accuracy(m, evaluate_file(*c, data));
    std::vector<ModalityInput> inputs;
    if (m == Modality::time_series)
      for (auto& r : text::load_tabular_csv(data, c->labels).records) inputs.emplace_back(std::move(r));
    else
      for (auto& clip : load_audio_manifest(data, c->labels)) inputs.emplace_back(std::move(clip));
    for (std::size_t k = 0; k < repeat; ++k)
      for (const auto& in : inputs) detail::submit_retrying(gw, in, {});
  }
  if (const auto dirs = get("profile.video.frames"); !dirs.empty()) {
    for (const auto& dir : split(dirs, ',')) {
      const auto seq = visual::load_frame_dir(trim(dir));
      for (std::size_t k = 0; k < repeat; ++k) detail::submit_retrying(gw, seq, {});
    }
  }
  if (!gw.wait_idle(std::chrono::minutes(10))) fail(errc::io_error, "profiling jobs did not finish");
  return gw.metrics();
}

inline std::vector<MetricsRow> run_profile(const GatewayConfig& cfg) {
  if (const auto it = cfg.extra.find("profile.fixture"); it != cfg.extra.end()) {
    std::filesystem::path p(it->second);
    return profile_fixture(json::parse(read_text_file(p.string()), nullptr, true));
  }
  Gateway gw(cfg);
  return profile_live(gw);
}

}  // namespace itsgw::gateway
