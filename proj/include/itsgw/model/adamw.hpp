#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "itsgw/nn/layers.hpp"

namespace itsgw::model {

struct AdamWParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Moments mirror the parameter list they were
/// created for; the list order must not change between steps.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const nn::ParamList& params, AdamWParams hp = {}) : hp_(hp) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->rows(), p.value->cols());
      v_.emplace_back(p.value->rows(), p.value->cols());
    }
  }

  void step(const nn::ParamList& params) {
    if (params.size() != m_.size()) fail(errc::shape_mismatch, "optimizer state tracks a different parameter list");
    for (std::size_t i = 0; i < params.size(); ++i)
      if (!params[i].value->same_shape(m_[i]) || !params[i].grad->same_shape(m_[i]))
        fail(errc::shape_mismatch, "parameter '" + params[i].name + "' changed shape");
    ++t_;
    const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& theta = params[i].value->data();
      const auto& g = params[i].grad->data();
      auto& m = m_[i].data();
      auto& v = v_[i].data();
      for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * g[j];
        v[j] = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * g[j] * g[j];
        const double m_hat = m[j] / bc1;
        const double v_hat = v[j] / bc2;
        theta[j] -= hp_.lr * (m_hat / (std::sqrt(v_hat) + hp_.eps) + hp_.weight_decay * theta[j]);
      }
    }
  }

  std::uint64_t step_count() const noexcept { return t_; }
  const AdamWParams& hyperparameters() const noexcept { return hp_; }
  const std::vector<nn::Tensor2D>& first_moments() const noexcept { return m_; }
  const std::vector<nn::Tensor2D>& second_moments() const noexcept { return v_; }

 private:
  AdamWParams hp_;
  std::vector<nn::Tensor2D> m_, v_;
  std::uint64_t t_ = 0;
};

inline void adamw_step(AdamW& state, const nn::ParamList& params) { state.step(params); }

}  // namespace itsgw::model
