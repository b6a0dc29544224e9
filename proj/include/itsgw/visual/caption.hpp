#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "itsgw/visual/pgm.hpp"

namespace itsgw::visual {

/// Indices 0, stride, 2*stride, ... capped at max_frames and the sequence end.
inline std::vector<std::size_t> sample_frames(std::size_t frame_count, std::size_t stride, std::size_t max_frames) {
  if (stride == 0 || max_frames == 0) fail(errc::invalid_argument, "stride and max_frames must be at least 1");
  if (frame_count == 0) fail(errc::empty_sequence, "frame sequence is empty");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < frame_count && out.size() < max_frames; i += stride) out.push_back(i);
  return out;
}

inline std::vector<std::size_t> sample_frames(const FrameSequence& seq, std::size_t stride, std::size_t max_frames) {
  return sample_frames(seq.frames.size(), stride, max_frames);
}

inline constexpr double kDarkBelow = 85.0;
inline constexpr double kDimBelow = 170.0;
inline constexpr double kHighContrastAbove = 16.0;

struct ImageStats {
  double mean = 0.0;
  double horizontal_diff = 0.0;  // mean |p(x+1,y) - p(x,y)|
};

inline ImageStats image_stats(const GrayImage& img) {
  if (img.width < kMinImageSide || img.height < kMinImageSide)
    fail(errc::image_too_small, "image " + std::to_string(img.width) + "x" + std::to_string(img.height) + " is below 8x8");
  ImageStats s;
  std::uint64_t total = 0, diff = 0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      total += img.at(x, y);
      if (x + 1 < img.width) diff += static_cast<std::uint64_t>(std::abs(int(img.at(x + 1, y)) - int(img.at(x, y))));
    }
  s.mean = static_cast<double>(total) / static_cast<double>(img.width * img.height);
  s.horizontal_diff = static_cast<double>(diff) / static_cast<double>((img.width - 1) * img.height);
  return s;
}

inline std::string builtin_caption(const GrayImage& img) {
  const ImageStats s = image_stats(img);
  const char* tone = s.mean < kDarkBelow ? "dark" : s.mean < kDimBelow ? "dim" : "bright";
  const char* contrast = s.horizontal_diff > kHighContrastAbove ? "high" : "low";
  return std::string("a ") + tone + " scene with " + contrast + " contrast";
}

inline constexpr std::string_view kSummaryPrefix = "summary: ";

inline std::string builtin_refine(const std::vector<std::string>& captions, RefineTask task) {
  if (captions.empty()) fail(errc::empty_caption_list, "nothing to refine");
  std::string joined;
  const std::string* prev = nullptr;
  for (const auto& c : captions) {
    if (task == RefineTask::summarize && prev && *prev == c) continue;
    if (!joined.empty()) joined += "; ";
    joined += c;
    prev = &c;
  }
  return task == RefineTask::summarize ? std::string(kSummaryPrefix) + joined : joined;
}

/// Something that turns images into captions and captions into refined text.
class Captioner {
 public:
  virtual ~Captioner() = default;
  /// "builtin" or "external:<backend id>".
  virtual std::string provenance() const = 0;
  virtual bool nondeterministic() const { return false; }
  virtual std::vector<std::string> caption(const std::vector<const GrayImage*>& frames) = 0;
  virtual std::string refine(const std::vector<std::string>& captions, RefineTask task) = 0;
};

class BuiltinCaptioner final : public Captioner {
 public:
  std::string provenance() const override { return "builtin"; }
  std::vector<std::string> caption(const std::vector<const GrayImage*>& frames) override {
    std::vector<std::string> out;
    out.reserve(frames.size());
    for (const auto* f : frames) out.push_back(builtin_caption(*f));
    return out;
  }
  std::string refine(const std::vector<std::string>& captions, RefineTask task) override { return builtin_refine(captions, task); }
};

struct ChainOptions {
  RefineTask task = RefineTask::summarize;
  std::size_t stride = 1;
  std::size_t max_frames = 16;
  bool fallback_to_builtin = true;
};

/// True for failures that mean "backend unusable right now" (timeouts, a
/// backend that cannot start or went away). Protocol violations are not
/// recoverable this way and always propagate.
inline bool fallback_eligible(errc code) { return code == errc::backend_timeout || code == errc::io_error; }

inline CaptionChainResult run_chain_with(const FrameSequence& seq, Captioner& captioner, const ChainOptions& opt) {
  check_frames(seq);
  const auto idx = sample_frames(seq, opt.stride, opt.max_frames);
  std::vector<const GrayImage*> frames;
  for (auto i : idx) {
    image_stats(seq.frames[i]);  // size precondition applies to every captioner
    frames.push_back(&seq.frames[i]);
  }
  const auto captions = captioner.caption(frames);
  if (captions.size() != frames.size()) fail(errc::backend_protocol_error, "captioner returned the wrong number of captions");
  CaptionChainResult res;
  for (std::size_t k = 0; k < idx.size(); ++k) res.captions.push_back({idx[k], captions[k]});
  res.refined_text = captioner.refine(captions, opt.task);
  if (res.refined_text.empty()) fail(errc::backend_protocol_error, "refined text is empty");
  res.task = opt.task;
  res.provenance = captioner.provenance();
  res.nondeterministic = captioner.nondeterministic();
  return res;
}

/// sample -> caption each frame -> refine. When the captioner is unusable and
/// fallback is enabled, the builtin chain runs instead and the reason is kept.
inline CaptionChainResult run_caption_chain(const FrameSequence& seq, Captioner& captioner, const ChainOptions& opt = {}) {
  try {
    return run_chain_with(seq, captioner, opt);
  } catch (const error& e) {
    if (!opt.fallback_to_builtin || !fallback_eligible(e.code()) || captioner.provenance() == "builtin") throw;
    BuiltinCaptioner builtin;
    CaptionChainResult res = run_chain_with(seq, builtin, opt);
    res.fallback_reason = e.what();
    return res;
  }
}

}  // namespace itsgw::visual
