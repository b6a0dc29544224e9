#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "itsgw/nn/tensor.hpp"

namespace itsgw::nn {

/// Named view of one trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  Tensor2D* value = nullptr;
  Tensor2D* grad = nullptr;
};

using ParamList = std::vector<ParamRef>;

inline void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.grad->fill(0.0);
}

inline std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->size();
  return n;
}

/// A layer with hand-derived backward pass. `forward` caches what `backward`
/// needs; `backward` accumulates into parameter gradients and returns the
/// gradient with respect to the forward input.
template <class L>
concept DifferentiableLayer = requires(L layer, const Tensor2D& x) {
  { layer.forward(x) } -> std::convertible_to<Tensor2D>;
  { layer.backward(x) } -> std::convertible_to<Tensor2D>;
  { layer.parameters() } -> std::convertible_to<ParamList>;
};

namespace detail {

inline void require_cache(bool ok, const char* layer) {
  if (!ok) fail(errc::invalid_argument, std::string(layer) + ": backward called without a matching forward");
}

}  // namespace detail

class Linear {
 public:
  Linear() = default;

  template <class Rng>
  Linear(std::size_t in, std::size_t out, bool with_bias, double init_std, Rng& rng)
      : weight_(Tensor2D::normal(in, out, init_std, rng)),
        weight_grad_(in, out),
        has_bias_(with_bias),
        bias_(with_bias ? Tensor2D(1, out) : Tensor2D()),
        bias_grad_(with_bias ? Tensor2D(1, out) : Tensor2D()) {}

  Tensor2D apply(const Tensor2D& x) const {
    Tensor2D y = matmul(x, weight_);
    if (has_bias_) add_row_bias(y, bias_);
    return y;
  }

  Tensor2D forward(const Tensor2D& x) {
    input_ = x;
    return apply(x);
  }

  Tensor2D backward(const Tensor2D& grad_out) {
    detail::require_cache(input_.rows() == grad_out.rows() && grad_out.cols() == weight_.cols(), "Linear");
    weight_grad_ += matmul_tn(input_, grad_out);
    if (has_bias_) bias_grad_ += column_sums(grad_out);
    return matmul_nt(grad_out, weight_);
  }

  ParamList parameters(const std::string& prefix = "") {
    ParamList out{{prefix + "weight", &weight_, &weight_grad_}};
    if (has_bias_) out.push_back({prefix + "bias", &bias_, &bias_grad_});
    return out;
  }

  std::size_t in_features() const noexcept { return weight_.rows(); }
  std::size_t out_features() const noexcept { return weight_.cols(); }
  const Tensor2D& weight() const noexcept { return weight_; }
  const Tensor2D& bias() const noexcept { return bias_; }
  bool has_bias() const noexcept { return has_bias_; }

 private:
  Tensor2D weight_, weight_grad_;
  bool has_bias_ = true;
  Tensor2D bias_, bias_grad_;
  Tensor2D input_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double eps = kLayerNormEps)
      : gamma_(1, dim, 1.0), beta_(1, dim), gamma_grad_(1, dim), beta_grad_(1, dim), eps_(eps) {}

  Tensor2D apply(const Tensor2D& x) const { return layer_norm(x, gamma_, beta_, eps_); }

  Tensor2D forward(const Tensor2D& x) {
    const std::size_t n = x.cols();
    if (n != gamma_.cols()) fail(errc::shape_mismatch, "LayerNorm width " + std::to_string(gamma_.cols()) + " vs input " + shape_str(x));
    normalized_ = Tensor2D(x.rows(), n);
    inv_std_.assign(x.rows(), 0.0);
    Tensor2D out(x.rows(), n);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto in = x.row(r);
      double mean = 0.0;
      for (double v : in) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : in) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n);
      inv_std_[r] = 1.0 / std::sqrt(var + eps_);
      for (std::size_t c = 0; c < n; ++c) {
        normalized_(r, c) = (in[c] - mean) * inv_std_[r];
        out(r, c) = normalized_(r, c) * gamma_[c] + beta_[c];
      }
    }
    return out;
  }

  Tensor2D backward(const Tensor2D& grad_out) {
    detail::require_cache(grad_out.same_shape(normalized_), "LayerNorm");
    const std::size_t n = grad_out.cols();
    Tensor2D grad_in(grad_out.rows(), n);
    std::vector<double> dxhat(n);
    for (std::size_t r = 0; r < grad_out.rows(); ++r) {
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double g = grad_out(r, c);
        gamma_grad_[c] += g * normalized_(r, c);
        beta_grad_[c] += g;
        dxhat[c] = g * gamma_[c];
        mean_dxhat += dxhat[c];
        mean_dxhat_xhat += dxhat[c] * normalized_(r, c);
      }
      mean_dxhat /= static_cast<double>(n);
      mean_dxhat_xhat /= static_cast<double>(n);
      for (std::size_t c = 0; c < n; ++c)
        grad_in(r, c) = inv_std_[r] * (dxhat[c] - mean_dxhat - normalized_(r, c) * mean_dxhat_xhat);
    }
    return grad_in;
  }

  ParamList parameters(const std::string& prefix = "") {
    return {{prefix + "gamma", &gamma_, &gamma_grad_}, {prefix + "beta", &beta_, &beta_grad_}};
  }

  Tensor2D& gamma() noexcept { return gamma_; }
  Tensor2D& beta() noexcept { return beta_; }
  const Tensor2D& gamma() const noexcept { return gamma_; }
  const Tensor2D& beta() const noexcept { return beta_; }
  double eps() const noexcept { return eps_; }

 private:
  Tensor2D gamma_, beta_, gamma_grad_, beta_grad_;
  double eps_ = kLayerNormEps;
  Tensor2D normalized_;
  std::vector<double> inv_std_;
};

class Gelu {
 public:
  Tensor2D apply(Tensor2D x) const {
    for (auto& v : x.data()) v = gelu(v);
    return x;
  }

  Tensor2D forward(const Tensor2D& x) {
    input_ = x;
    return apply(x);
  }

  Tensor2D backward(const Tensor2D& grad_out) {
    detail::require_cache(grad_out.same_shape(input_), "Gelu");
    Tensor2D grad_in = grad_out;
    for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] *= gelu_derivative(input_[i]);
    return grad_in;
  }

  ParamList parameters(const std::string& = "") { return {}; }

 private:
  Tensor2D input_;
};

/// Two linear maps around a GELU.
class FeedForward {
 public:
  FeedForward() = default;

  template <class Rng>
  FeedForward(std::size_t d_model, std::size_t d_ff, double init_std, Rng& rng)
      : up_(d_model, d_ff, true, init_std, rng), down_(d_ff, d_model, true, init_std, rng) {}

  Tensor2D apply(const Tensor2D& x) const { return down_.apply(act_.apply(up_.apply(x))); }
  Tensor2D forward(const Tensor2D& x) { return down_.forward(act_.forward(up_.forward(x))); }
  Tensor2D backward(const Tensor2D& g) { return up_.backward(act_.backward(down_.backward(g))); }

  ParamList parameters(const std::string& prefix = "") {
    ParamList out = up_.parameters(prefix + "up.");
    auto down = down_.parameters(prefix + "down.");
    out.insert(out.end(), down.begin(), down.end());
    return out;
  }

 private:
  Linear up_, down_;
  Gelu act_;
};

/// Multi-head self-attention with a key padding mask. The key projection
/// carries no bias: softmax is invariant to a per-query constant, so such a
/// bias would never receive gradient.
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention() = default;

  template <class Rng>
  MultiHeadSelfAttention(std::size_t d_model, std::size_t heads, double init_std, Rng& rng)
      : heads_(heads),
        query_(d_model, d_model, true, init_std, rng),
        key_(d_model, d_model, false, init_std, rng),
        value_(d_model, d_model, true, init_std, rng),
        out_(d_model, d_model, true, init_std, rng) {
    if (heads == 0 || d_model % heads != 0) fail(errc::invalid_config, "d_model must be divisible by heads");
  }

  void set_mask(std::vector<std::uint8_t> key_mask) { mask_ = std::move(key_mask); }
  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }

  Tensor2D apply(const Tensor2D& x, std::span<const std::uint8_t> key_mask) const {
    check_mask(x, key_mask);
    const Tensor2D q = query_.apply(x), k = key_.apply(x), v = value_.apply(x);
    Tensor2D concat(x.rows(), q.cols());
    const std::size_t dk = head_dim();
    for (std::size_t h = 0; h < heads_; ++h) {
      const Tensor2D probs = attention_probs(slice(q, h), slice(k, h), key_mask);
      scatter(concat, matmul(probs, slice(v, h)), h, dk);
    }
    return out_.apply(concat);
  }

  Tensor2D forward(const Tensor2D& x, std::span<const std::uint8_t> key_mask) {
    check_mask(x, key_mask);
    const Tensor2D q = query_.forward(x), k = key_.forward(x), v = value_.forward(x);
    Tensor2D concat(x.rows(), q.cols());
    const std::size_t dk = head_dim();
    cache_.assign(heads_, {});
    for (std::size_t h = 0; h < heads_; ++h) {
      HeadCache& c = cache_[h];
      c.q = slice(q, h);
      c.k = slice(k, h);
      c.v = slice(v, h);
      c.probs = attention_probs(c.q, c.k, key_mask);
      scatter(concat, matmul(c.probs, c.v), h, dk);
    }
    return out_.forward(concat);
  }

  /// Uses the mask installed by `set_mask`.
  Tensor2D forward(const Tensor2D& x) { return forward(x, mask_); }

  Tensor2D backward(const Tensor2D& grad_out) {
    detail::require_cache(cache_.size() == heads_ && !cache_.empty() && cache_[0].probs.rows() == grad_out.rows(),
                          "MultiHeadSelfAttention");
    const Tensor2D d_concat = out_.backward(grad_out);
    const std::size_t rows = grad_out.rows(), dk = head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Tensor2D dq(rows, d_model()), dk_all(rows, d_model()), dv(rows, d_model());
    for (std::size_t h = 0; h < heads_; ++h) {
      const HeadCache& c = cache_[h];
      const Tensor2D d_head = slice(d_concat, h);
      const Tensor2D d_probs = matmul_nt(d_head, c.v);
      scatter(dv, matmul_tn(c.probs, d_head), h, dk);
      // softmax backward: dS = P * (dP - rowsum(dP * P))
      Tensor2D d_scores(rows, rows);
      for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < rows; ++j) dot += d_probs(i, j) * c.probs(i, j);
        for (std::size_t j = 0; j < rows; ++j) d_scores(i, j) = c.probs(i, j) * (d_probs(i, j) - dot) * scale;
      }
      scatter(dq, matmul(d_scores, c.k), h, dk);
      scatter(dk_all, matmul_tn(d_scores, c.q), h, dk);
    }
    Tensor2D grad_in = query_.backward(dq);
    grad_in += key_.backward(dk_all);
    grad_in += value_.backward(dv);
    return grad_in;
  }

  ParamList parameters(const std::string& prefix = "") {
    ParamList out;
    for (auto* part : {&query_, &key_, &value_, &out_}) {
      const char* name = part == &query_ ? "q." : part == &key_ ? "k." : part == &value_ ? "v." : "o.";
      auto ps = part->parameters(prefix + name);
      out.insert(out.end(), ps.begin(), ps.end());
    }
    return out;
  }

  std::size_t heads() const noexcept { return heads_; }
  std::size_t d_model() const noexcept { return query_.in_features(); }
  std::size_t head_dim() const noexcept { return d_model() / heads_; }

 private:
  struct HeadCache {
    Tensor2D q, k, v, probs;
  };

  static void check_mask(const Tensor2D& x, std::span<const std::uint8_t> key_mask) {
    if (key_mask.size() != x.rows()) fail(errc::shape_mismatch, "attention mask length must equal sequence length");
    if (std::none_of(key_mask.begin(), key_mask.end(), [](std::uint8_t b) { return b != 0; })) fail(errc::invalid_argument, "every key is masked");
  }

  Tensor2D slice(const Tensor2D& x, std::size_t head) const {
    const std::size_t dk = head_dim();
    Tensor2D out(x.rows(), dk);
    for (std::size_t r = 0; r < x.rows(); ++r)
      std::copy_n(x.row(r).begin() + static_cast<std::ptrdiff_t>(head * dk), dk, out.row(r).begin());
    return out;
  }

  static void scatter(Tensor2D& dst, const Tensor2D& part, std::size_t head, std::size_t dk) {
    for (std::size_t r = 0; r < part.rows(); ++r)
      std::copy(part.row(r).begin(), part.row(r).end(), dst.row(r).begin() + static_cast<std::ptrdiff_t>(head * dk));
  }

  static Tensor2D attention_probs(const Tensor2D& q, const Tensor2D& k, std::span<const std::uint8_t> key_mask) {
    Tensor2D scores = matmul_nt(q, k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    for (std::size_t i = 0; i < scores.rows(); ++i)
      for (std::size_t j = 0; j < scores.cols(); ++j)
        scores(i, j) = key_mask[j] ? scores(i, j) * scale : -std::numeric_limits<double>::infinity();
    return softmax_rows(std::move(scores));
  }

  std::size_t heads_ = 1;
  Linear query_, key_, value_, out_;
  std::vector<std::uint8_t> mask_;
  std::vector<HeadCache> cache_;
};

// ---------------------------------------------------------------------------
// Scalar losses attached downstream of a layer for gradient checking.

/// sum_ij w_ij * y_ij with fixed weights; gradient is w.
struct WeightedSumLoss {
  Tensor2D weights;

  double operator()(const Tensor2D& y, Tensor2D* grad) const {
    if (!y.same_shape(weights)) fail(errc::shape_mismatch, "loss weights " + shape_str(weights) + " vs output " + shape_str(y));
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += weights[i] * y[i];
    if (grad) *grad = weights;
    return total;
  }
};

struct CrossEntropyLoss {
  std::vector<std::size_t> labels;

  double operator()(const Tensor2D& logits, Tensor2D* grad) const {
    auto res = cross_entropy(logits, labels);
    if (grad) *grad = std::move(res.grad);
    return res.loss;
  }
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;  // "input" or the parameter name
  std::size_t checked = 0;

  bool passed(double tol) const noexcept { return max_rel_error < tol; }
};

inline double relative_error(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-8});
}

/// Central finite differences against the analytic backward pass, over every
/// parameter entry and (if `backward` returns a same-shaped tensor) the input.
template <DifferentiableLayer Layer, class Loss>
GradCheckResult grad_check(Layer& layer, const Tensor2D& input, const Loss& loss, double h = 1e-5) {
  if (!(h >= 1e-7 && h <= 1e-3)) fail(errc::invalid_argument, "finite-difference step must lie in [1e-7, 1e-3]");
  ParamList params = layer.parameters();
  zero_grads(params);
  Tensor2D grad_out;
  loss(layer.forward(input), &grad_out);
  const Tensor2D grad_in = layer.backward(grad_out);

  GradCheckResult result;
  auto record = [&](double analytic, double numeric, const std::string& where) {
    const double err = relative_error(analytic, numeric);
    ++result.checked;
    if (err > result.max_rel_error || result.worst_param.empty()) {
      result.max_rel_error = std::max(err, result.max_rel_error);
      result.worst_param = where;
    }
  };
  auto objective = [&](const Tensor2D& x) { return loss(layer.forward(x), nullptr); };

  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double saved = (*p.value)[i];
      (*p.value)[i] = saved + h;
      const double up = objective(input);
      (*p.value)[i] = saved - h;
      const double down = objective(input);
      (*p.value)[i] = saved;
      record((*p.grad)[i], (up - down) / (2.0 * h), p.name);
    }
  }
  if (grad_in.same_shape(input)) {
    Tensor2D probe = input;
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double saved = probe[i];
      probe[i] = saved + h;
      const double up = objective(probe);
      probe[i] = saved - h;
      const double down = objective(probe);
      probe[i] = saved;
      record(grad_in[i], (up - down) / (2.0 * h), "input");
    }
  }
  return result;
}

}  // namespace itsgw::nn
