#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook formulas with plain loops and share no code paths with the library
// beyond the Tensor2D container.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "itsgw/nn/tensor.hpp"

namespace oracle {

using itsgw::nn::Tensor2D;

inline Tensor2D naive_matmul(const Tensor2D& a, const Tensor2D& b) {
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

inline double row_cross_entropy(std::span<const double> logits, std::size_t label) {
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v);
  return -std::log(std::exp(logits[label]) / denom);
}

inline Tensor2D naive_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v, const std::vector<std::uint8_t>& mask) {
  Tensor2D out(q.rows(), v.cols());
  const double dk = static_cast<double>(q.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> w(k.rows(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      if (!mask[j]) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
      w[j] = std::exp(s / std::sqrt(dk));
      total += w[j];
    }
    for (std::size_t j = 0; j < k.rows(); ++j)
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += w[j] / total * v(j, c);
  }
  return out;
}

inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((j * k) % n) / static_cast<double>(n);
      acc += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

/// Two-pass mean and population standard deviation.
inline std::pair<double, double> mean_std(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(x.size()))};
}

/// Scalar AdamW written straight from the update equations.
struct ScalarAdamW {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, decay = 0.01;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double theta, double g) {
    ++t;
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g * g;
    const double m_hat = m / (1 - std::pow(beta1, t));
    const double v_hat = v / (1 - std::pow(beta2, t));
    return theta - lr * (m_hat / (std::sqrt(v_hat) + eps) + decay * theta);
  }
};

}  // namespace oracle
