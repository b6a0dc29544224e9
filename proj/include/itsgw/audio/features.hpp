#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "itsgw/audio/fft.hpp"
#include "itsgw/core/types.hpp"
#include "itsgw/nn/tensor.hpp"

namespace itsgw::audio {

inline constexpr std::size_t kFrameLength = 400;  // 25 ms at 16 kHz
inline constexpr std::size_t kFrameHop = 160;     // 10 ms
inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kFeatureDim = kFftSize / 2 + 1;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kNormEps = 1e-7;

struct FeatureSequence {
  nn::Tensor2D frames;  // T x kFeatureDim
  std::size_t source_samples = 0;

  std::size_t length() const noexcept { return frames.rows(); }
};

/// Scales PCM to [-1, 1) and standardizes to zero mean, unit (population) std.
inline std::vector<double> normalize_clip(const AudioClip& clip) {
  if (clip.samples.empty()) fail(errc::invalid_argument, "empty clip");
  const double n = static_cast<double>(clip.samples.size());
  std::vector<double> x(clip.samples.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(clip.samples[i]) / 32768.0;
    mean += x[i];
  }
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double denom = std::sqrt(var / n) + kNormEps;
  for (double& v : x) v = (v - mean) / denom;
  return x;
}

constexpr std::size_t frame_count(std::size_t samples) noexcept {
  return samples < kFrameLength ? 0 : (samples - kFrameLength) / kFrameHop + 1;
}

/// Symmetric Hann window over the frame length.
inline const std::vector<double>& hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kFrameLength);
    for (std::size_t i = 0; i < kFrameLength; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(kFrameLength - 1));
    return w;
  }();
  return window;
}

/// ln(|STFT| + 1e-10) over 400-sample Hann frames, hop 160, zero-padded to 512.
inline FeatureSequence log_spectrogram(std::span<const double> signal) {
  if (signal.size() < kFrameLength)
    fail(errc::clip_too_short, "clip has " + std::to_string(signal.size()) + " samples, need at least " + std::to_string(kFrameLength));
  const std::size_t frames = frame_count(signal.size());
  const auto& window = hann_window();
  FeatureSequence out{nn::Tensor2D(frames, kFeatureDim), signal.size()};
  std::vector<Complex> buf(kFftSize);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t offset = t * kFrameHop;
    for (std::size_t i = 0; i < kFftSize; ++i)
      buf[i] = i < kFrameLength ? Complex(signal[offset + i] * window[i], 0.0) : Complex(0.0, 0.0);
    fft_radix2_inplace(buf);
    auto row = out.frames.row(t);
    for (std::size_t k = 0; k < kFeatureDim; ++k) row[k] = std::log(std::abs(buf[k]) + kLogFloor);
  }
  return out;
}

inline FeatureSequence clip_features(const AudioClip& clip) {
  if (clip.samples.size() < kFrameLength)
    fail(errc::clip_too_short, "clip has " + std::to_string(clip.samples.size()) + " samples, need at least " + std::to_string(kFrameLength));
  const auto normalized = normalize_clip(clip);
  return log_spectrogram(normalized);
}

// Debug dump: little-endian int32 T, int32 F, then T*F little-endian f64.

inline std::vector<std::uint8_t> encode_feature_dump(const FeatureSequence& seq) {
  static_assert(std::endian::native == std::endian::little, "feature dumps assume a little-endian host");
  std::vector<std::uint8_t> out(8 + seq.frames.size() * 8);
  const auto t = static_cast<std::int32_t>(seq.frames.rows()), f = static_cast<std::int32_t>(seq.frames.cols());
  std::memcpy(out.data(), &t, 4);
  std::memcpy(out.data() + 4, &f, 4);
  std::memcpy(out.data() + 8, seq.frames.data().data(), seq.frames.size() * 8);
  return out;
}

inline FeatureSequence decode_feature_dump(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) fail(errc::malformed_header, "feature dump shorter than its header");
  std::int32_t t = 0, f = 0;
  std::memcpy(&t, bytes.data(), 4);
  std::memcpy(&f, bytes.data() + 4, 4);
  if (t < 0 || f <= 0 || bytes.size() != 8 + static_cast<std::size_t>(t) * static_cast<std::size_t>(f) * 8)
    fail(errc::malformed_header, "feature dump size does not match its header");
  FeatureSequence seq{nn::Tensor2D(static_cast<std::size_t>(t), static_cast<std::size_t>(f)), 0};
  std::memcpy(seq.frames.data().data(), bytes.data() + 8, seq.frames.size() * 8);
  return seq;
}

}  // namespace itsgw::audio
