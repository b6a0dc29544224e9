#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "itsgw/core/error.hpp"
#include "itsgw/nn/layers.hpp"

namespace itsgw::model {

using nn::ParamList;
using nn::Tensor2D;

enum class InputMode { token_input, feature_input };

constexpr std::string_view to_string(InputMode m) noexcept { return m == InputMode::token_input ? "token" : "feature"; }

inline constexpr double kInitStd = 0.02;

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 128;
  std::size_t max_len = 64;
  InputMode mode = InputMode::token_input;
  std::size_t vocab_size = 0;    // token mode
  std::size_t feature_dim = 257;  // feature mode
  std::size_t n_classes = 3;
  std::uint64_t seed = 0;

  void check() const {
    auto bad = [](const std::string& why) { fail(errc::invalid_config, why); };
    if (heads == 0) bad("heads must be at least 1");
    if (d_model == 0 || d_model % heads != 0) bad("d_model must be a positive multiple of heads");
    if (d_ff == 0) bad("d_ff must be positive");
    if (max_len < 4) bad("max_len must be at least 4");
    if (n_classes < 2) bad("n_classes must be at least 2");
    if (mode == InputMode::token_input && vocab_size == 0) bad("token mode needs a vocabulary size");
    if (mode == InputMode::feature_input && feature_dim == 0) bad("feature mode needs a feature dimension");
  }

  bool operator==(const EncoderConfig&) const = default;
};

/// Closed-form trainable parameter count for a configuration.
constexpr std::size_t parameter_count(const EncoderConfig& c) noexcept {
  const std::size_t d = c.d_model;
  const std::size_t input = c.mode == InputMode::token_input ? c.vocab_size * d : c.feature_dim * d + d;
  const std::size_t attention = 4 * d * d + 3 * d;  // key projection has no bias
  const std::size_t ffn = d * c.d_ff + c.d_ff + c.d_ff * d + d;
  const std::size_t norms = 4 * d;
  const std::size_t final_norm = c.layers > 0 ? 2 * d : 0;
  return input + c.max_len * d + c.layers * (attention + ffn + norms) + final_norm + d * c.n_classes + c.n_classes;
}

/// One model input: token ids (token mode, length max_len) or a T x F
/// feature matrix (feature mode, T <= max_len), plus a key mask of the same
/// length with nonzero entries for real positions.
struct ModelInput {
  std::vector<std::size_t> ids;
  Tensor2D features;
  std::vector<std::uint8_t> mask;

  std::size_t length() const noexcept { return mask.size(); }
};

namespace detail {

/// Pre-norm block: x + attn(ln1(x)), then h + ffn(ln2(h)).
class EncoderBlock {
 public:
  EncoderBlock() = default;

  template <class Rng>
  EncoderBlock(std::size_t d_model, std::size_t heads, std::size_t d_ff, Rng& rng)
      : ln1_(d_model), attn_(d_model, heads, kInitStd, rng), ln2_(d_model), ffn_(d_model, d_ff, kInitStd, rng) {}

  Tensor2D apply(const Tensor2D& x, std::span<const std::uint8_t> mask) const {
    Tensor2D h = x + attn_.apply(ln1_.apply(x), mask);
    return h + ffn_.apply(ln2_.apply(h));
  }

  Tensor2D forward(const Tensor2D& x, std::span<const std::uint8_t> mask) {
    Tensor2D h = x + attn_.forward(ln1_.forward(x), mask);
    return h + ffn_.forward(ln2_.forward(h));
  }

  Tensor2D backward(const Tensor2D& grad_out) {
    Tensor2D grad_h = grad_out;
    grad_h += ln2_.backward(ffn_.backward(grad_out));
    Tensor2D grad_x = grad_h;
    grad_x += ln1_.backward(attn_.backward(grad_h));
    return grad_x;
  }

  ParamList parameters(const std::string& prefix) {
    ParamList out;
    for (auto&& part : {ln1_.parameters(prefix + "ln1."), attn_.parameters(prefix + "attn."), ln2_.parameters(prefix + "ln2."),
                        ffn_.parameters(prefix + "ffn.")})
      out.insert(out.end(), part.begin(), part.end());
    return out;
  }

 private:
  nn::LayerNorm ln1_;
  nn::MultiHeadSelfAttention attn_;
  nn::LayerNorm ln2_;
  nn::FeedForward ffn_;
};

}  // namespace detail

/// Transformer encoder classifier: embedding (token lookup or linear input
/// projection) plus learned positions, `layers` pre-norm blocks, a final
/// layer norm, and a linear head on the position-0 state.
class EncoderModel {
 public:
  EncoderModel() = default;

  explicit EncoderModel(const EncoderConfig& config) : config_(config) {
    config_.check();
    std::mt19937_64 rng(config_.seed);
    const std::size_t d = config_.d_model;
    if (config_.mode == InputMode::token_input) {
      token_embedding_ = Tensor2D::normal(config_.vocab_size, d, kInitStd, rng);
      token_embedding_grad_ = Tensor2D(config_.vocab_size, d);
    } else {
      input_proj_ = nn::Linear(config_.feature_dim, d, true, kInitStd, rng);
    }
    position_ = Tensor2D::normal(config_.max_len, d, kInitStd, rng);
    position_grad_ = Tensor2D(config_.max_len, d);
    for (std::size_t l = 0; l < config_.layers; ++l) blocks_.emplace_back(d, config_.heads, config_.d_ff, rng);
    if (config_.layers > 0) final_norm_ = nn::LayerNorm(d);
    head_ = nn::Linear(d, config_.n_classes, true, kInitStd, rng);
  }

  const EncoderConfig& config() const noexcept { return config_; }

  /// Parameters in checkpoint order.
  ParamList parameters() {
    ParamList out;
    if (config_.mode == InputMode::token_input)
      out.push_back({"embed.token", &token_embedding_, &token_embedding_grad_});
    else
      for (auto& p : input_proj_.parameters("embed.proj.")) out.push_back(p);
    out.push_back({"embed.position", &position_, &position_grad_});
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      for (auto& p : blocks_[l].parameters("block" + std::to_string(l) + ".")) out.push_back(p);
    if (config_.layers > 0)
      for (auto& p : final_norm_.parameters("final_norm.")) out.push_back(p);
    for (auto& p : head_.parameters("head.")) out.push_back(p);
    return out;
  }

  /// Inference; safe to call concurrently on a shared const model.
  Tensor2D logits(const ModelInput& input) const {
    check_input(input);
    Tensor2D x = embed_apply(input);
    for (const auto& block : blocks_) x = block.apply(x, input.mask);
    return head_.apply(pool_apply(x));
  }

  /// Training forward pass; caches activations for `backward`.
  Tensor2D forward(const ModelInput& input) {
    check_input(input);
    cached_ids_ = input.ids;
    cached_len_ = input.length();
    Tensor2D x = config_.mode == InputMode::token_input ? embed_apply(input) : input_proj_.forward(input.features);
    if (config_.mode == InputMode::feature_input) add_positions(x);
    for (auto& block : blocks_) x = block.forward(x, input.mask);
    Tensor2D pooled(1, config_.d_model);
    std::copy(x.row(0).begin(), x.row(0).end(), pooled.row(0).begin());
    if (config_.layers > 0) pooled = final_norm_.forward(pooled);
    return head_.forward(pooled);
  }

  /// Accumulates parameter gradients for d loss / d logits. Returns the
  /// gradient with respect to the input features (feature mode) or an empty
  /// tensor (token mode).
  Tensor2D backward(const Tensor2D& grad_logits) {
    if (cached_len_ == 0) fail(errc::invalid_argument, "EncoderModel: backward without forward");
    Tensor2D grad_pooled = head_.backward(grad_logits);
    if (config_.layers > 0) grad_pooled = final_norm_.backward(grad_pooled);
    Tensor2D grad(cached_len_, config_.d_model);
    std::copy(grad_pooled.row(0).begin(), grad_pooled.row(0).end(), grad.row(0).begin());
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) grad = it->backward(grad);
    for (std::size_t i = 0; i < cached_len_; ++i) {
      auto g = grad.row(i);
      auto pg = position_grad_.row(i);
      for (std::size_t c = 0; c < g.size(); ++c) pg[c] += g[c];
    }
    if (config_.mode == InputMode::token_input) {
      for (std::size_t i = 0; i < cached_len_; ++i) {
        auto g = grad.row(i);
        auto eg = token_embedding_grad_.row(cached_ids_[i]);
        for (std::size_t c = 0; c < g.size(); ++c) eg[c] += g[c];
      }
      return {};
    }
    return input_proj_.backward(grad);
  }

 private:
  void check_input(const ModelInput& input) const {
    if (config_.mode == InputMode::token_input) {
      if (input.ids.size() != config_.max_len || input.mask.size() != config_.max_len)
        fail(errc::shape_mismatch, "token input must have exactly max_len ids and mask entries");
      for (auto id : input.ids)
        if (id >= config_.vocab_size) fail(errc::shape_mismatch, "token id " + std::to_string(id) + " outside vocabulary");
    } else {
      const std::size_t t = input.features.rows();
      if (t == 0 || t > config_.max_len || input.features.cols() != config_.feature_dim || input.mask.size() != t)
        fail(errc::shape_mismatch, "feature input must be T x " + std::to_string(config_.feature_dim) + " with 1 <= T <= max_len and a T-long mask");
    }
    if (input.mask.empty() || input.mask[0] == 0) fail(errc::shape_mismatch, "position 0 must be unmasked");
  }

  void add_positions(Tensor2D& x) const {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto row = x.row(i);
      auto pos = position_.row(i);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += pos[c];
    }
  }

  Tensor2D embed_apply(const ModelInput& input) const {
    Tensor2D x;
    if (config_.mode == InputMode::token_input) {
      x = Tensor2D(input.ids.size(), config_.d_model);
      for (std::size_t i = 0; i < input.ids.size(); ++i) {
        auto src = token_embedding_.row(input.ids[i]);
        std::copy(src.begin(), src.end(), x.row(i).begin());
      }
    } else {
      x = input_proj_.apply(input.features);
    }
    add_positions(x);
    return x;
  }

  Tensor2D pool_apply(const Tensor2D& x) const {
    Tensor2D pooled(1, config_.d_model);
    std::copy(x.row(0).begin(), x.row(0).end(), pooled.row(0).begin());
    return config_.layers > 0 ? final_norm_.apply(pooled) : pooled;
  }

  EncoderConfig config_;
  Tensor2D token_embedding_, token_embedding_grad_;
  nn::Linear input_proj_;
  Tensor2D position_, position_grad_;
  std::vector<detail::EncoderBlock> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear head_;

  std::vector<std::size_t> cached_ids_;
  std::size_t cached_len_ = 0;
};

inline EncoderModel init_model(const EncoderConfig& config) { return EncoderModel(config); }

/// Inference on a frozen model.
inline std::vector<double> forward_classify(const EncoderModel& model, const ModelInput& input) {
  return model.logits(input).data();
}

/// Softmax distribution and argmax (ties to the lowest index).
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  nn::softmax_row_inplace(p);
  return p;
}

/// Adapts a feature-mode model with a fixed mask to the layer interface so it
/// can be gradient-checked end to end.
class FeatureClassifierLayer {
 public:
  FeatureClassifierLayer(EncoderModel& model, std::vector<std::uint8_t> mask) : model_(&model), mask_(std::move(mask)) {}

  Tensor2D forward(const Tensor2D& x) { return model_->forward({{}, x, mask_}); }
  Tensor2D backward(const Tensor2D& g) { return model_->backward(g); }
  ParamList parameters() { return model_->parameters(); }

 private:
  EncoderModel* model_;
  std::vector<std::uint8_t> mask_;
};

/// Token-mode counterpart; the Tensor2D input is ignored and only parameters
/// are checked.
class TokenClassifierLayer {
 public:
  TokenClassifierLayer(EncoderModel& model, ModelInput input) : model_(&model), input_(std::move(input)) {}

  Tensor2D forward(const Tensor2D&) { return model_->forward(input_); }
  Tensor2D backward(const Tensor2D& g) { return model_->backward(g); }
  ParamList parameters() { return model_->parameters(); }

 private:
  EncoderModel* model_;
  ModelInput input_;
};

}  // namespace itsgw::model
