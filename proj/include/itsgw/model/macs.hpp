#pragma once

#include <cstdint>

#include "itsgw/model/encoder.hpp"

namespace itsgw::model {

/// Multiply-accumulates for one sequence of length `seq_len`: per layer the
/// four d x d projections, the score and value products, and the two FFN
/// maps, plus the classifier head. Norms, softmax and GELU are not counted.
constexpr std::uint64_t count_macs(std::uint64_t layers, std::uint64_t d_model, std::uint64_t d_ff, std::uint64_t n_classes,
                                   std::uint64_t seq_len) noexcept {
  const std::uint64_t s = seq_len, d = d_model;
  return layers * (4 * s * d * d + 2 * s * s * d + 2 * s * d * d_ff) + d * n_classes;
}

inline std::uint64_t count_macs(const EncoderConfig& config, std::size_t seq_len) {
  if (seq_len > config.max_len) fail(errc::invalid_argument, "sequence length exceeds max_len");
  return count_macs(config.layers, config.d_model, config.d_ff, config.n_classes, seq_len);
}

}  // namespace itsgw::model
