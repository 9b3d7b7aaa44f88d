#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "facemanip/autodiff.hpp"

namespace facemanip::nn {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapRM = Eigen::Map<MatRM<S>>;
template <class S>
using CMapRM = Eigen::Map<const MatRM<S>>;

namespace detail {

template <class S, class Fwd, class Bwd>
Var<S> elementwise_unary(const Var<S>& a, Fwd fwd, Bwd dfdx) {
  Tensor<S> out(a.value().shape());
  const Tensor<S>& av = a.value();
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i]);
  return make_op<S>(std::move(out), {a.node()}, [dfdx](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i)
      g[i] += self.grad[i] * dfdx(p.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor<S> out(a.value().shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return detail::make_op<S>(std::move(out), {a.node(), b.node()}, [](Node<S>& self) {
    for (int k = 0; k < 2; ++k) {
      Node<S>& p = *self.parents[k];
      if (!p.requires_grad) continue;
      Tensor<S>& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor<S> out(a.value().shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return detail::make_op<S>(std::move(out), {a.node(), b.node()}, [](Node<S>& self) {
    Node<S>& pa = *self.parents[0];
    if (pa.requires_grad) {
      Tensor<S>& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    Node<S>& pb = *self.parents[1];
    if (pb.requires_grad) {
      Tensor<S>& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require(a.value().same_shape(b.value()), "mul: shape mismatch");
  Tensor<S> out(a.value().shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return detail::make_op<S>(std::move(out), {a.node(), b.node()}, [](Node<S>& self) {
    Node<S>& pa = *self.parents[0];
    Node<S>& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor<S>& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor<S>& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <class S>
Var<S> mul_scalar(const Var<S>& a, S c) {
  return detail::elementwise_unary<S>(
      a, [c](S x) { return x * c; }, [c](S, S) { return c; });
}

template <class S>
Var<S> add_scalar(const Var<S>& a, S c) {
  return detail::elementwise_unary<S>(
      a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
}

template <class S>
Var<S> neg(const Var<S>& a) {
  return mul_scalar(a, S(-1));
}

template <class S>
Var<S> abs_(const Var<S>& a) {
  for (std::size_t i = 0; i < a.value().numel(); ++i) trace_kink<S>(a.value()[i]);
  return detail::elementwise_unary<S>(
      a, [](S x) { return std::abs(x); },
      [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <class S>
Var<S> relu_(const Var<S>& a) {
  for (std::size_t i = 0; i < a.value().numel(); ++i) trace_kink<S>(a.value()[i]);
  return detail::elementwise_unary<S>(
      a, [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <class S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.2)) {
  for (std::size_t i = 0; i < a.value().numel(); ++i) trace_kink<S>(a.value()[i]);
  return detail::elementwise_unary<S>(
      a, [slope](S x) { return x > S(0) ? x : slope * x; },
      [slope](S x, S) { return x > S(0) ? S(1) : slope; });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  return detail::elementwise_unary<S>(
      a,
      [](S x) {
        if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
        S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <class S>
Var<S> tanh_(const Var<S>& a) {
  return detail::elementwise_unary<S>(
      a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

// log(max(x, eps)); gradient is zero on the clamped branch.
template <class S>
Var<S> log_clamped(const Var<S>& a, S eps) {
  for (std::size_t i = 0; i < a.value().numel(); ++i)
    trace_kink<S>(a.value()[i] - eps);
  return detail::elementwise_unary<S>(
      a, [eps](S x) { return std::log(std::max(x, eps)); },
      [eps](S x, S) { return x > eps ? S(1) / x : S(0); });
}

// ---- reductions ------------------------------------------------------------

template <class S>
Var<S> sum_all(const Var<S>& a) {
  S acc = 0;
  for (std::size_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i];
  return detail::make_op<S>(Tensor<S>::scalar(acc), {a.node()}, [](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    S go = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += go;
  });
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
  require(a.value().numel() > 0, "mean_all: empty tensor");
  return mul_scalar(sum_all(a), S(1) / static_cast<S>(a.value().numel()));
}

// [N, D] -> [N]: per-row sum.
template <class S>
Var<S> row_sum(const Var<S>& a) {
  require(a.value().rank() == 2, "row_sum expects rank-2 input");
  std::size_t n = a.value().dim(0), d = a.value().dim(1);
  Tensor<S> out({n});
  for (std::size_t i = 0; i < n; ++i) {
    S acc = 0;
    for (std::size_t j = 0; j < d; ++j) acc += a.value().at(i, j);
    out[i] = acc;
  }
  return detail::make_op<S>(std::move(out), {a.node()}, [n, d](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) g.at(i, j) += self.grad[i];
  });
}

// ---- linear algebra --------------------------------------------------------

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul expects rank-2 inputs");
  std::size_t n = a.value().dim(0), k = a.value().dim(1), m = b.value().dim(1);
  require(b.value().dim(0) == k, "matmul: inner dimension mismatch");
  Tensor<S> out({n, m});
  CMapRM<S> A(a.value().data(), n, k), B(b.value().data(), k, m);
  MapRM<S>(out.data(), n, m).noalias() = A * B;
  return detail::make_op<S>(std::move(out), {a.node(), b.node()}, [n, k, m](Node<S>& self) {
    CMapRM<S> G(self.grad.data(), n, m);
    Node<S>& pa = *self.parents[0];
    Node<S>& pb = *self.parents[1];
    if (pa.requires_grad) {
      CMapRM<S> B(pb.value.data(), k, m);
      MapRM<S>(pa.ensure_grad().data(), n, k).noalias() += G * B.transpose();
    }
    if (pb.requires_grad) {
      CMapRM<S> A(pa.value.data(), n, k);
      MapRM<S>(pb.ensure_grad().data(), k, m).noalias() += A.transpose() * G;
    }
  });
}

// [N, M] + broadcast [M]
template <class S>
Var<S> add_bias2d(const Var<S>& a, const Var<S>& b) {
  require(a.value().rank() == 2 && b.value().rank() == 1 && a.value().dim(1) == b.value().dim(0),
          "add_bias2d: shape mismatch");
  std::size_t n = a.value().dim(0), m = a.value().dim(1);
  Tensor<S> out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = a.value().at(i, j) + b.value()[j];
  return detail::make_op<S>(std::move(out), {a.node(), b.node()}, [n, m](Node<S>& self) {
    Node<S>& pa = *self.parents[0];
    Node<S>& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor<S>& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      Tensor<S>& g = pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad.at(i, j);
    }
  });
}

// ---- shape ops -------------------------------------------------------------

template <class S>
Var<S> reshape(const Var<S>& a, std::vector<std::size_t> shape) {
  Tensor<S> out = a.value().reshaped(std::move(shape));
  return detail::make_op<S>(std::move(out), {a.node()}, [](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
  });
}

// Concatenate rank-2 tensors along dim 1.
template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat_cols: empty input");
  std::size_t n = parts[0].value().dim(0), total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require(p.value().rank() == 2 && p.value().dim(0) == n, "concat_cols: shape mismatch");
    widths.push_back(p.value().dim(1));
    total += p.value().dim(1);
  }
  Tensor<S> out({n, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::size_t w = p.value().dim(1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(i, off + j) = p.value().at(i, j);
    off += w;
  }
  std::vector<std::shared_ptr<Node<S>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_op<S>(std::move(out), std::move(nodes), [n, widths](Node<S>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node<S>& p = *self.parents[k];
      if (p.requires_grad) {
        Tensor<S>& g = p.ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g.at(i, j) += self.grad.at(i, off + j);
      }
      off += widths[k];
    }
  });
}

// Concatenate two rank-4 tensors along the channel dim.
template <class S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require(av.rank() == 4 && bv.rank() == 4 && av.dim(0) == bv.dim(0) &&
              av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
          "concat_channels: shape mismatch");
  std::size_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
  Tensor<S> out({n, ca + cb, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < ca; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(i, c, y, x) = av.at(i, c, y, x);
    for (std::size_t c = 0; c < cb; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(i, ca + c, y, x) = bv.at(i, c, y, x);
  }
  return detail::make_op<S>(std::move(out), {a.node(), b.node()},
                            [n, ca, cb, h, w](Node<S>& self) {
    Node<S>& pa = *self.parents[0];
    Node<S>& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor<S>& g = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < ca; ++c)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) g.at(i, c, y, x) += self.grad.at(i, c, y, x);
    }
    if (pb.requires_grad) {
      Tensor<S>& g = pb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cb; ++c)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
              g.at(i, c, y, x) += self.grad.at(i, ca + c, y, x);
    }
  });
}

// [N, C] -> [N, C, H, W] by spatial broadcast.
template <class S>
Var<S> tile_spatial(const Var<S>& v, std::size_t h, std::size_t w) {
  require(v.value().rank() == 2, "tile_spatial expects rank-2 input");
  std::size_t n = v.value().dim(0), c = v.value().dim(1);
  Tensor<S> out({n, c, h, w});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      S val = v.value().at(i, k);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(i, k, y, x) = val;
    }
  return detail::make_op<S>(std::move(out), {v.node()}, [n, c, h, w](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        S acc = 0;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) acc += self.grad.at(i, k, y, x);
        g.at(i, k) += acc;
      }
  });
}

// [N, C, H, W] -> [N, C]
template <class S>
Var<S> global_avg_pool(const Var<S>& a) {
  require(a.value().rank() == 4, "global_avg_pool expects rank-4 input");
  std::size_t n = a.value().dim(0), c = a.value().dim(1), h = a.value().dim(2),
              w = a.value().dim(3);
  Tensor<S> out({n, c});
  S inv = S(1) / static_cast<S>(h * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) {
      S acc = 0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) acc += a.value().at(i, k, y, x);
      out.at(i, k) = acc * inv;
    }
  return detail::make_op<S>(std::move(out), {a.node()}, [n, c, h, w, inv](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) {
        S go = self.grad.at(i, k) * inv;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) g.at(i, k, y, x) += go;
      }
  });
}

// ---- convolution and pooling -----------------------------------------------

namespace detail {

template <class S>
void im2col(const Tensor<S>& x, int kh, int kw, int stride, int pad, int ho, int wo,
            std::vector<S>& col) {
  int n = static_cast<int>(x.dim(0)), cin = static_cast<int>(x.dim(1)),
      h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
  std::size_t m = static_cast<std::size_t>(n) * ho * wo;
  col.assign(static_cast<std::size_t>(cin) * kh * kw * m, S(0));
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        std::size_t row = (static_cast<std::size_t>(c) * kh + ky) * kw + kx;
        S* dst = col.data() + row * m;
        for (int b = 0; b < n; ++b)
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride - pad + ky;
            std::size_t base = (static_cast<std::size_t>(b) * ho + oy) * wo;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= w) continue;
              dst[base + ox] = x.at(b, c, iy, ix);
            }
          }
      }
}

template <class S>
void col2im_add(const std::vector<S>& col, int kh, int kw, int stride, int pad, int ho,
                int wo, Tensor<S>& dx) {
  int n = static_cast<int>(dx.dim(0)), cin = static_cast<int>(dx.dim(1)),
      h = static_cast<int>(dx.dim(2)), w = static_cast<int>(dx.dim(3));
  std::size_t m = static_cast<std::size_t>(n) * ho * wo;
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        std::size_t row = (static_cast<std::size_t>(c) * kh + ky) * kw + kx;
        const S* src = col.data() + row * m;
        for (int b = 0; b < n; ++b)
          for (int oy = 0; oy < ho; ++oy) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            std::size_t base = (static_cast<std::size_t>(b) * ho + oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= w) continue;
              dx.at(b, c, iy, ix) += src[base + ox];
            }
          }
      }
}

}  // namespace detail

template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  require(xv.rank() == 4 && wv.rank() == 4, "conv2d expects rank-4 input and weight");
  require(xv.dim(1) == wv.dim(1), "conv2d: channel mismatch");
  require(b.value().rank() == 1 && b.value().dim(0) == wv.dim(0), "conv2d: bias mismatch");
  int n = static_cast<int>(xv.dim(0)), h = static_cast<int>(xv.dim(2)),
      wd = static_cast<int>(xv.dim(3));
  int cout = static_cast<int>(wv.dim(0)), kh = static_cast<int>(wv.dim(2)),
      kw = static_cast<int>(wv.dim(3));
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d: output dims collapse");

  auto col = std::make_shared<std::vector<S>>();
  detail::im2col(xv, kh, kw, stride, pad, ho, wo, *col);
  std::size_t k = static_cast<std::size_t>(xv.dim(1)) * kh * kw;
  std::size_t m = static_cast<std::size_t>(n) * ho * wo;

  std::vector<S> ymat(static_cast<std::size_t>(cout) * m);
  {
    CMapRM<S> W(wv.data(), cout, k), C(col->data(), k, m);
    MapRM<S>(ymat.data(), cout, m).noalias() = W * C;
  }
  Tensor<S> out({static_cast<std::size_t>(n), static_cast<std::size_t>(cout),
                 static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  for (int bi = 0; bi < n; ++bi)
    for (int c = 0; c < cout; ++c) {
      const S* src = ymat.data() + static_cast<std::size_t>(c) * m +
                     static_cast<std::size_t>(bi) * ho * wo;
      S bias = b.value()[c];
      S* dst = &out.at(bi, c, 0, 0);
      for (int i = 0; i < ho * wo; ++i) dst[i] = src[i] + bias;
    }

  return detail::make_op<S>(
      std::move(out), {x.node(), w.node(), b.node()},
      [col, stride, pad, n, cout, kh, kw, ho, wo, k, m](Node<S>& self) {
        // Gather output grad back into GEMM layout.
        std::vector<S> gmat(static_cast<std::size_t>(cout) * m);
        for (int bi = 0; bi < n; ++bi)
          for (int c = 0; c < cout; ++c) {
            const S* src = &self.grad.at(bi, c, 0, 0);
            S* dst = gmat.data() + static_cast<std::size_t>(c) * m +
                     static_cast<std::size_t>(bi) * ho * wo;
            for (int i = 0; i < ho * wo; ++i) dst[i] = src[i];
          }
        Node<S>& px = *self.parents[0];
        Node<S>& pw = *self.parents[1];
        Node<S>& pb = *self.parents[2];
        CMapRM<S> G(gmat.data(), cout, m);
        if (pw.requires_grad) {
          CMapRM<S> C(col->data(), k, m);
          MapRM<S>(pw.ensure_grad().data(), cout, k).noalias() += G * C.transpose();
        }
        if (pb.requires_grad) {
          Tensor<S>& g = pb.ensure_grad();
          for (int c = 0; c < cout; ++c) {
            S acc = 0;
            const S* row = gmat.data() + static_cast<std::size_t>(c) * m;
            for (std::size_t i = 0; i < m; ++i) acc += row[i];
            g[c] += acc;
          }
        }
        if (px.requires_grad) {
          std::vector<S> dcol(k * m);
          CMapRM<S> W(pw.value.data(), cout, k);
          MapRM<S>(dcol.data(), k, m).noalias() = W.transpose() * G;
          detail::col2im_add(dcol, kh, kw, stride, pad, ho, wo, px.ensure_grad());
        }
      });
}

// Average pooling with kernel == stride == k (exact tiling required).
template <class S>
Var<S> avg_pool2d(const Var<S>& a, int k) {
  const auto& av = a.value();
  require(av.rank() == 4, "avg_pool2d expects rank-4 input");
  require(av.dim(2) % k == 0 && av.dim(3) % k == 0, "avg_pool2d: dims not divisible by kernel");
  std::size_t n = av.dim(0), c = av.dim(1), ho = av.dim(2) / k, wo = av.dim(3) / k;
  Tensor<S> out({n, c, ho, wo});
  S inv = S(1) / static_cast<S>(k * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          S acc = 0;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) acc += av.at(i, ch, oy * k + dy, ox * k + dx);
          out.at(i, ch, oy, ox) = acc * inv;
        }
  return detail::make_op<S>(std::move(out), {a.node()}, [n, c, ho, wo, k, inv](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < ho; ++oy)
          for (std::size_t ox = 0; ox < wo; ++ox) {
            S go = self.grad.at(i, ch, oy, ox) * inv;
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) g.at(i, ch, oy * k + dy, ox * k + dx) += go;
          }
  });
}

template <class S>
Var<S> upsample_nearest2(const Var<S>& a) {
  const auto& av = a.value();
  require(av.rank() == 4, "upsample_nearest2 expects rank-4 input");
  std::size_t n = av.dim(0), c = av.dim(1), h = av.dim(2), w = av.dim(3);
  Tensor<S> out({n, c, h * 2, w * 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h * 2; ++y)
        for (std::size_t x = 0; x < w * 2; ++x)
          out.at(i, ch, y, x) = av.at(i, ch, y / 2, x / 2);
  return detail::make_op<S>(std::move(out), {a.node()}, [n, c, h, w](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h * 2; ++y)
          for (std::size_t x = 0; x < w * 2; ++x)
            g.at(i, ch, y / 2, x / 2) += self.grad.at(i, ch, y, x);
  });
}

// Instance normalization over spatial dims, per (sample, channel), with
// per-channel affine parameters.
template <class S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                     S eps = S(1e-5)) {
  const auto& xv = x.value();
  require(xv.rank() == 4, "instance_norm expects rank-4 input");
  std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3), hw = h * w;
  require(gamma.value().dim(0) == c && beta.value().dim(0) == c,
          "instance_norm: affine parameter size mismatch");
  auto xhat = std::make_shared<Tensor<S>>(xv.shape());
  auto inv = std::make_shared<Tensor<S>>(std::vector<std::size_t>{n, c});
  Tensor<S> out(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const S* px = &xv.at(i, ch, 0, 0);
      S mu = 0;
      for (std::size_t j = 0; j < hw; ++j) mu += px[j];
      mu /= static_cast<S>(hw);
      S var = 0;
      for (std::size_t j = 0; j < hw; ++j) {
        S d = px[j] - mu;
        var += d * d;
      }
      var /= static_cast<S>(hw);
      S iv = S(1) / std::sqrt(var + eps);
      inv->at(i, ch) = iv;
      S g = gamma.value()[ch], b = beta.value()[ch];
      S* pxh = &xhat->at(i, ch, 0, 0);
      S* po = &out.at(i, ch, 0, 0);
      for (std::size_t j = 0; j < hw; ++j) {
        pxh[j] = (px[j] - mu) * iv;
        po[j] = g * pxh[j] + b;
      }
    }
  return detail::make_op<S>(
      std::move(out), {x.node(), gamma.node(), beta.node()},
      [xhat, inv, n, c, hw](Node<S>& self) {
        Node<S>& px = *self.parents[0];
        Node<S>& pg = *self.parents[1];
        Node<S>& pb = *self.parents[2];
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const S* gy = &self.grad.at(i, ch, 0, 0);
            const S* xh = &xhat->at(i, ch, 0, 0);
            S sum_gy = 0, sum_gyxh = 0;
            for (std::size_t j = 0; j < hw; ++j) {
              sum_gy += gy[j];
              sum_gyxh += gy[j] * xh[j];
            }
            if (pg.requires_grad) pg.ensure_grad()[ch] += sum_gyxh;
            if (pb.requires_grad) pb.ensure_grad()[ch] += sum_gy;
            if (px.requires_grad) {
              S g = pg.value[ch];
              S iv = inv->at(i, ch);
              S m1 = g * sum_gy / static_cast<S>(hw);
              S m2 = g * sum_gyxh / static_cast<S>(hw);
              S* gx = &px.ensure_grad().at(i, ch, 0, 0);
              for (std::size_t j = 0; j < hw; ++j)
                gx[j] += iv * (g * gy[j] - m1 - xh[j] * m2);
            }
          }
      });
}

// Mean cross entropy of softmax(logits) against integer labels.
template <class S>
Var<S> softmax_cross_entropy(const Var<S>& logits, const std::vector<std::size_t>& labels) {
  const auto& lv = logits.value();
  require(lv.rank() == 2, "softmax_cross_entropy expects rank-2 logits");
  std::size_t n = lv.dim(0), k = lv.dim(1);
  require(labels.size() == n, "softmax_cross_entropy: label count mismatch");
  auto probs = std::make_shared<Tensor<S>>(std::vector<std::size_t>{n, k});
  S loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] < k, "softmax_cross_entropy: label out of range");
    S mx = lv.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, lv.at(i, j));
    S denom = 0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(lv.at(i, j) - mx);
    for (std::size_t j = 0; j < k; ++j) probs->at(i, j) = std::exp(lv.at(i, j) - mx) / denom;
    loss += std::log(denom) - (lv.at(i, labels[i]) - mx);
  }
  loss /= static_cast<S>(n);
  auto labels_copy = std::make_shared<std::vector<std::size_t>>(labels);
  return detail::make_op<S>(Tensor<S>::scalar(loss), {logits.node()},
                            [probs, labels_copy, n, k](Node<S>& self) {
    Node<S>& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor<S>& g = p.ensure_grad();
    S go = self.grad[0] / static_cast<S>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        S onehot = (j == (*labels_copy)[i]) ? S(1) : S(0);
        g.at(i, j) += go * (probs->at(i, j) - onehot);
      }
  });
}

// ---- compound helpers ------------------------------------------------------

template <class S>
Var<S> mse(const Var<S>& a, const Var<S>& b) {
  Var<S> d = sub(a, b);
  return mean_all(mul(d, d));
}

template <class S>
Var<S> l1(const Var<S>& a, const Var<S>& b) {
  return mean_all(abs_(sub(a, b)));
}

}  // namespace facemanip::nn
