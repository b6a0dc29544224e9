#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "itsgw/audio/features.hpp"

namespace itsgw::audio {

struct LabeledFeatures {
  FeatureSequence features;
  std::size_t label = 0;
};

/// B sequences padded to the batch maximum length. Padded cells are zero.
struct CollatedBatch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  std::size_t feature_dim = 0;
  std::vector<double> features;      // B x max_len x feature_dim
  std::vector<std::uint8_t> mask;    // B x max_len
  std::vector<std::size_t> labels;
  std::vector<std::size_t> lengths;  // original frame counts
  std::vector<std::size_t> source_index;  // position in the input list

  double at(std::size_t b, std::size_t t, std::size_t f) const { return features[(b * max_len + t) * feature_dim + f]; }

  nn::Tensor2D row_features(std::size_t b) const {
    nn::Tensor2D out(max_len, feature_dim);
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(b * max_len * feature_dim), max_len * feature_dim, out.data().begin());
    return out;
  }

  std::vector<std::uint8_t> row_mask(std::size_t b) const {
    return {mask.begin() + static_cast<std::ptrdiff_t>(b * max_len), mask.begin() + static_cast<std::ptrdiff_t>((b + 1) * max_len)};
  }
};

/// Chunks items in the given order into groups of at most `batch_size`,
/// padding each group to its own longest sequence.
inline std::vector<CollatedBatch> chunk_and_pad(std::span<const LabeledFeatures> items, std::span<const std::size_t> order,
                                                std::size_t batch_size) {
  if (batch_size == 0) fail(errc::invalid_argument, "batch size must be at least 1");
  if (items.empty()) fail(errc::invalid_argument, "nothing to collate");
  const std::size_t dim = items.front().features.frames.cols();
  std::vector<CollatedBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    CollatedBatch batch;
    batch.batch_size = end - start;
    batch.feature_dim = dim;
    for (std::size_t i = start; i < end; ++i) batch.max_len = std::max(batch.max_len, items[order[i]].features.length());
    batch.features.assign(batch.batch_size * batch.max_len * dim, 0.0);
    batch.mask.assign(batch.batch_size * batch.max_len, 0);
    for (std::size_t i = start; i < end; ++i) {
      const auto& item = items[order[i]];
      if (item.features.frames.cols() != dim) fail(errc::shape_mismatch, "feature dimension differs between items");
      const std::size_t b = i - start, len = item.features.length();
      std::copy(item.features.frames.data().begin(), item.features.frames.data().end(),
                batch.features.begin() + static_cast<std::ptrdiff_t>(b * batch.max_len * dim));
      std::fill_n(batch.mask.begin() + static_cast<std::ptrdiff_t>(b * batch.max_len), len, 1);
      batch.labels.push_back(item.label);
      batch.lengths.push_back(len);
      batch.source_index.push_back(order[i]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

/// Sorts by length descending (stable, so ties keep submission order) before
/// chunking, which minimizes padding for a fixed batch size.
inline std::vector<CollatedBatch> collate_batch(std::span<const LabeledFeatures> items, std::size_t batch_size) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return items[a].features.length() > items[b].features.length(); });
  return chunk_and_pad(items, order, batch_size);
}

/// Padded frames divided by real frames across all batches.
inline double padding_ratio(std::span<const CollatedBatch> batches) {
  std::size_t padded = 0, real = 0;
  for (const auto& b : batches) {
    for (auto len : b.lengths) {
      real += len;
      padded += b.max_len - len;
    }
  }
  return real == 0 ? 0.0 : static_cast<double>(padded) / static_cast<double>(real);
}

}  // namespace itsgw::audio
