#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "itsgw/core/types.hpp"

namespace itsgw::fusion {

struct ModalityPosterior {
  Modality modality = Modality::time_series;
  std::vector<double> distribution;
  double weight = 1.0;
};

struct FusedPrediction {
  std::vector<double> distribution;
  std::size_t class_index = 0;
};

inline constexpr double kDistributionTolerance = 1e-9;

/// Weighted mean of the distributions; argmax ties go to the lowest index.
inline FusedPrediction fuse_late(const std::vector<ModalityPosterior>& posteriors) {
  if (posteriors.empty()) fail(errc::all_zero_weights, "nothing to fuse");
  const std::size_t classes = posteriors.front().distribution.size();
  double total = 0.0;
  for (const auto& p : posteriors) {
    if (p.distribution.size() != classes || classes == 0)
      fail(errc::schema_mismatch, std::string(to_string(p.modality)) + " posterior has " + std::to_string(p.distribution.size()) +
                                      " classes, expected " + std::to_string(classes));
    if (!std::isfinite(p.weight) || p.weight < 0.0)
      fail(errc::invalid_argument, std::string(to_string(p.modality)) + " weight must be finite and non-negative");
    double sum = 0.0;
    for (double v : p.distribution) {
      if (!std::isfinite(v) || v < 0.0) fail(errc::invalid_argument, "distribution entries must be finite and non-negative");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > kDistributionTolerance)
      fail(errc::invalid_argument, std::string(to_string(p.modality)) + " distribution sums to " + std::to_string(sum));
    total += p.weight;
  }
  if (!(total > 0.0)) fail(errc::all_zero_weights, "all fusion weights are zero");

  FusedPrediction out;
  out.distribution.assign(classes, 0.0);
  for (const auto& p : posteriors) {
    if (p.weight == 0.0) continue;
    const double w = p.weight / total;
    for (std::size_t c = 0; c < classes; ++c) out.distribution[c] += w * p.distribution[c];
  }
  for (std::size_t c = 1; c < classes; ++c)
    if (out.distribution[c] > out.distribution[out.class_index]) out.class_index = c;
  return out;
}

/// Default weights: each modality's last evaluation accuracy, renormalized
/// to sum to one. Modalities never evaluated get weight zero.
inline std::map<Modality, double> accuracy_weights(const std::map<Modality, double>& accuracy) {
  double total = 0.0;
  for (const auto& [m, a] : accuracy) {
    if (!std::isfinite(a) || a < 0.0) fail(errc::invalid_argument, "accuracy must be finite and non-negative");
    total += a;
  }
  if (!(total > 0.0)) fail(errc::all_zero_weights, "no modality has a positive evaluation accuracy");
  std::map<Modality, double> w;
  for (const auto& [m, a] : accuracy) w[m] = a / total;
  return w;
}

// ---------------------------------------------------------------------------
// Feedback loop

struct RetrainEvent {
  std::set<Modality> modalities;
  double window_accuracy = 0.0;
};

struct FeedbackState {
  std::size_t window = 100;
  double threshold = 0.85;
  std::set<Modality> modalities;
  std::deque<bool> bits;
  std::size_t correct = 0;

  void check() const {
    if (window == 0) fail(errc::invalid_config, "feedback window must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) fail(errc::invalid_config, "feedback threshold must lie in (0,1)");
  }

  bool full() const noexcept { return bits.size() == window; }
  double accuracy() const noexcept { return bits.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(bits.size()); }
};

/// Pushes one correctness bit. Fires when the window is full and its mean is
/// strictly below the threshold; the window is then cleared so one bad
/// stretch produces one event, not one per subsequent call.
inline std::optional<RetrainEvent> feedback_update(FeedbackState& state, bool correct) {
  state.bits.push_back(correct);
  state.correct += correct ? 1 : 0;
  while (state.bits.size() > state.window) {
    state.correct -= state.bits.front() ? 1 : 0;
    state.bits.pop_front();
  }
  if (!state.full()) return std::nullopt;
  const double acc = state.accuracy();
  if (!(acc < state.threshold)) return std::nullopt;
  state.bits.clear();
  state.correct = 0;
  return RetrainEvent{state.modalities, acc};
}

/// One FeedbackState per modality stream, each behind its own lock.
class FeedbackMonitor {
 public:
  FeedbackMonitor(std::size_t window, double threshold) {
    for (Modality m : all_modalities) {
      auto& s = streams_[m];
      s.state.window = window;
      s.state.threshold = threshold;
      s.state.modalities = {m};
      s.state.check();
    }
  }

  std::optional<RetrainEvent> record(Modality m, bool correct) {
    auto& s = streams_.at(m);
    std::lock_guard lock(s.mu);
    return feedback_update(s.state, correct);
  }

  FeedbackState snapshot(Modality m) const {
    const auto& s = streams_.at(m);
    std::lock_guard lock(s.mu);
    return s.state;
  }

 private:
  struct Stream {
    mutable std::mutex mu;
    FeedbackState state;
  };
  std::map<Modality, Stream> streams_;
};

}  // namespace itsgw::fusion
