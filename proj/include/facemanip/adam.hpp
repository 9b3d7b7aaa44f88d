#pragma once

#include <cstdint>
#include <vector>

#include "facemanip/layers.hpp"

namespace facemanip::nn {

// Adam over a fixed parameter group. State order follows the group order, so
// the update is reproducible run to run.
template <class S>
class Adam {
 public:
  Adam() = default;
  explicit Adam(ParamList<S> params, double lr = 2e-4, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      m_.emplace_back(p.var.value().shape());
      v_.emplace_back(p.var.value().shape());
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& var = params_[k].var;
      if (!var.has_grad()) continue;
      const Tensor<S>& g = var.grad();
      Tensor<S>& value = var.mutable_value();
      Tensor<S>& m = m_[k];
      Tensor<S>& v = v_[k];
      for (std::size_t i = 0; i < value.numel(); ++i) {
        double gi = static_cast<double>(g[i]);
        double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
        double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        value[i] = static_cast<S>(static_cast<double>(value[i]) -
                                  lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void zero_grad() { zero_grads(params_); }

  std::uint64_t step_count() const { return t_; }
  const ParamList<S>& params() const { return params_; }

 private:
  ParamList<S> params_;
  std::vector<Tensor<S>> m_, v_;
  double lr_ = 2e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
};

}  // namespace facemanip::nn
