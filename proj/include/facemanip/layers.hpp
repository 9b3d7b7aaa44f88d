#pragma once

#include <string>
#include <vector>

#include "facemanip/ops.hpp"
#include "facemanip/rng.hpp"

namespace facemanip::nn {

template <class S>
struct ParamRef {
  std::string name;
  Var<S> var;
};

template <class S>
using ParamList = std::vector<ParamRef<S>>;

template <class S>
void set_trainable(ParamList<S>& params, bool trainable) {
  for (auto& p : params) p.var.set_requires_grad(trainable);
}

template <class S>
void zero_grads(ParamList<S>& params) {
  for (auto& p : params) p.var.zero_grad();
}

namespace detail {

// He-style init: N(0, sqrt(2 / fan_in)).
template <class S>
Tensor<S> he_normal(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor<S> t(std::move(shape));
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.normal(0.0, stddev));
  return t;
}

}  // namespace detail

template <class S>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng)
      : stride_(stride), pad_(pad) {
    std::size_t fan_in = static_cast<std::size_t>(cin) * k * k;
    w_ = Var<S>::param(detail::he_normal<S>({static_cast<std::size_t>(cout),
                                             static_cast<std::size_t>(cin),
                                             static_cast<std::size_t>(k),
                                             static_cast<std::size_t>(k)},
                                            fan_in, rng));
    b_ = Var<S>::param(Tensor<S>({static_cast<std::size_t>(cout)}));
  }

  Var<S> operator()(const Var<S>& x) const { return conv2d(x, w_, b_, stride_, pad_); }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".w", w_});
    out.push_back({prefix + ".b", b_});
  }

  Var<S> w_, b_;
  int stride_ = 1, pad_ = 1;
};

template <class S>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    w_ = Var<S>::param(detail::he_normal<S>(
        {static_cast<std::size_t>(in), static_cast<std::size_t>(out)},
        static_cast<std::size_t>(in), rng));
    b_ = Var<S>::param(Tensor<S>({static_cast<std::size_t>(out)}));
  }

  Var<S> operator()(const Var<S>& x) const { return add_bias2d(matmul(x, w_), b_); }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".w", w_});
    out.push_back({prefix + ".b", b_});
  }

  Var<S> w_, b_;
};

template <class S>
class InstanceNorm2d {
 public:
  InstanceNorm2d() = default;
  explicit InstanceNorm2d(int channels) {
    gamma_ = Var<S>::param(Tensor<S>::full({static_cast<std::size_t>(channels)}, S(1)));
    beta_ = Var<S>::param(Tensor<S>({static_cast<std::size_t>(channels)}));
  }

  Var<S> operator()(const Var<S>& x) const { return instance_norm(x, gamma_, beta_); }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".gamma", gamma_});
    out.push_back({prefix + ".beta", beta_});
  }

  Var<S> gamma_, beta_;
};

// conv-norm-lrelu-conv-norm with identity skip.
template <class S>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(int channels, Rng& rng)
      : c1_(channels, channels, 3, 1, 1, rng),
        c2_(channels, channels, 3, 1, 1, rng),
        n1_(channels),
        n2_(channels) {}

  Var<S> operator()(const Var<S>& x) const {
    Var<S> y = leaky_relu(n1_(c1_(x)));
    y = n2_(c2_(y));
    return add(x, y);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    c1_.collect(prefix + ".c1", out);
    c2_.collect(prefix + ".c2", out);
    n1_.collect(prefix + ".n1", out);
    n2_.collect(prefix + ".n2", out);
  }

  Conv2d<S> c1_, c2_;
  InstanceNorm2d<S> n1_, n2_;
};

}  // namespace facemanip::nn
