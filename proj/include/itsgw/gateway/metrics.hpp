#pragma once

#include <deque>
#include <map>
#include <mutex>

#include "itsgw/core/types.hpp"

namespace itsgw::gateway {

struct ModalityProfile {
  std::optional<double> accuracy;  // fraction in [0,1] from the last labeled evaluation
  std::uint64_t mac_count = 0;
  std::string task;
};

/// Rolling per-modality latency windows plus the static profile of each
/// modality's model. A modality is active once it has a latency sample.
class MetricsCollector {
 public:
  explicit MetricsCollector(std::size_t window = 100) : window_(window ? window : 1) {}

  void set_profile(Modality m, ModalityProfile p) {
    std::lock_guard lock(mu_);
    profiles_[m] = std::move(p);
  }

  void set_accuracy(Modality m, double accuracy) {
    std::lock_guard lock(mu_);
    profiles_[m].accuracy = accuracy;
  }

  std::optional<double> accuracy(Modality m) const {
    std::lock_guard lock(mu_);
    const auto it = profiles_.find(m);
    return it == profiles_.end() ? std::nullopt : it->second.accuracy;
  }

  void record_latency(Modality m, double ms) {
    std::lock_guard lock(mu_);
    auto& w = latencies_[m];
    w.push_back(ms);
    while (w.size() > window_) w.pop_front();
  }

  std::vector<MetricsRow> report() const {
    std::lock_guard lock(mu_);
    std::vector<MetricsRow> rows;
    for (Modality m : all_modalities) {
      const auto it = latencies_.find(m);
      if (it == latencies_.end() || it->second.empty()) continue;
      MetricsRow row;
      row.modality = m;
      double sum = 0.0;
      for (double v : it->second) sum += v;
      row.latency_ms = sum / static_cast<double>(it->second.size());
      if (const auto p = profiles_.find(m); p != profiles_.end()) {
        if (p->second.accuracy) row.accuracy_pct = *p->second.accuracy * 100.0;
        row.mac_count = p->second.mac_count;
        row.task = p->second.task;
      }
      if (row.task.empty()) row.task = std::string(to_string(m == Modality::video ? TaskKind::captioning : TaskKind::classification));
      rows.push_back(std::move(row));
    }
    return rows;
  }

  std::size_t window() const noexcept { return window_; }

 private:
  std::size_t window_;
  mutable std::mutex mu_;
  std::map<Modality, ModalityProfile> profiles_;
  std::map<Modality, std::deque<double>> latencies_;
};

inline std::string format_report(const std::vector<MetricsRow>& rows) {
  std::string out;
  for (const auto& r : rows) out += metrics_row_format(r) + "\n";
  return out;
}

}  // namespace itsgw::gateway
