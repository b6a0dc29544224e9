#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "itsgw/core/error.hpp"

namespace itsgw::nn {

/// Dense row-major matrix of doubles. Vectors are 1 x n tensors.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) fail(errc::shape_mismatch, "data length does not match rows x cols");
  }

  static Tensor2D from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Tensor2D t(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != t.cols_) fail(errc::shape_mismatch, "ragged rows");
      std::copy(rows[r].begin(), rows[r].end(), t.row(r).begin());
    }
    return t;
  }

  static Tensor2D identity(std::size_t n) {
    Tensor2D t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  template <class Rng>
  static Tensor2D normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor2D t(rows, cols);
    for (auto& v : t.data_) v = dist(rng);
    return t;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Tensor2D& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor2D& operator+=(const Tensor2D& o) {
    if (!same_shape(o)) fail(errc::shape_mismatch, "elementwise add");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool operator==(const Tensor2D&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_str(const Tensor2D& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

inline Tensor2D operator+(Tensor2D a, const Tensor2D& b) {
  a += b;
  return a;
}

inline Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) fail(errc::shape_mismatch, "matmul " + shape_str(a) + " * " + shape_str(b));
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

/// a^T * b without materializing the transpose.
inline Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows()) fail(errc::shape_mismatch, "matmul_tn " + shape_str(a) + " * " + shape_str(b));
  Tensor2D out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

/// a * b^T.
inline Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) fail(errc::shape_mismatch, "matmul_nt " + shape_str(a) + " * " + shape_str(b));
  Tensor2D out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

inline Tensor2D transpose(const Tensor2D& a) {
  Tensor2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// Adds a 1 x cols bias to every row.
inline void add_row_bias(Tensor2D& x, const Tensor2D& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) fail(errc::shape_mismatch, "bias " + shape_str(bias) + " for " + shape_str(x));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] += bias[c];
  }
}

/// Column sums as a 1 x cols tensor.
inline Tensor2D column_sums(const Tensor2D& x) {
  Tensor2D out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  return out;
}

inline void softmax_row_inplace(std::span<double> row) {
  double max_v = -std::numeric_limits<double>::infinity();
  for (double v : row) max_v = std::max(max_v, v);
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - max_v);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

inline Tensor2D softmax_rows(Tensor2D x) {
  for (std::size_t r = 0; r < x.rows(); ++r) softmax_row_inplace(x.row(r));
  return x;
}

inline constexpr double kLayerNormEps = 1e-5;

inline Tensor2D layer_norm(const Tensor2D& x, const Tensor2D& gamma, const Tensor2D& beta, double eps = kLayerNormEps) {
  if (gamma.size() != x.cols() || beta.size() != x.cols())
    fail(errc::shape_mismatch, "layer_norm gamma/beta length must equal " + std::to_string(x.cols()));
  Tensor2D out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (in[c] - mean) * inv_std * gamma[c] + beta[c];
  }
  return out;
}

inline constexpr double kGeluSqrt2OverPi = 0.7978845608;
inline constexpr double kGeluCubic = 0.044715;

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x)));
}

inline double gelu_derivative(double x) {
  const double inner = kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(inner);
  const double d_inner = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner;
}

struct CrossEntropyResult {
  double loss = 0.0;
  Tensor2D grad;  // d loss / d logits
};

/// Mean negative log-likelihood over rows; gradient is (softmax - onehot) / rows.
inline CrossEntropyResult cross_entropy(const Tensor2D& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) fail(errc::shape_mismatch, "one label per logits row required");
  CrossEntropyResult res{0.0, softmax_rows(logits)};
  const double inv_rows = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const std::size_t label = labels[r];
    if (label >= logits.cols()) fail(errc::label_out_of_range, "label " + std::to_string(label) + " >= " + std::to_string(logits.cols()));
    // log-sum-exp form keeps saturated rows accurate
    auto row = logits.row(r);
    const auto max_it = std::max_element(row.begin(), row.end());
    const double max_v = *max_it;
    double rest = 0.0;  // sum without the max term, so log1p stays exact near saturation
    for (auto it = row.begin(); it != row.end(); ++it)
      if (it != max_it) rest += std::exp(*it - max_v);
    res.loss += (std::log1p(rest) + (max_v - row[label])) * inv_rows;
    auto g = res.grad.row(r);
    g[label] -= 1.0;
    for (double& v : g) v *= inv_rows;
  }
  return res;
}

/// softmax(Q K^T / sqrt(d_k) with masked key columns at -inf) V.
/// Nonzero `key_mask[j]` means key j participates.
inline Tensor2D scaled_dot_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v, std::span<const std::uint8_t> key_mask) {
  if (q.cols() != k.cols()) fail(errc::shape_mismatch, "Q and K must share d_k");
  if (k.rows() != v.rows()) fail(errc::shape_mismatch, "K and V must have the same number of rows");
  if (key_mask.size() != k.rows()) fail(errc::shape_mismatch, "mask length must equal K rows");
  if (std::none_of(key_mask.begin(), key_mask.end(), [](std::uint8_t b) { return b != 0; }))
    fail(errc::invalid_argument, "every key is masked");
  Tensor2D scores = matmul_nt(q, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (std::size_t i = 0; i < scores.rows(); ++i)
    for (std::size_t j = 0; j < scores.cols(); ++j)
      scores(i, j) = key_mask[j] ? scores(i, j) * scale : -std::numeric_limits<double>::infinity();
  return matmul(softmax_rows(std::move(scores)), v);
}

}  // namespace itsgw::nn
