#pragma once

#include <array>
#include <string>
#include <vector>

#include "facemanip/adam.hpp"
#include "facemanip/checkpoint.hpp"
#include "facemanip/geometry.hpp"
#include "facemanip/layers.hpp"

namespace facemanip {

// Face raster in CHW order, values in [-1, 1].
struct FaceImage {
  int height = 0, width = 0;
  std::vector<float> chw;

  FaceImage() = default;
  FaceImage(int h, int w) : height(h), width(w), chw(3ull * h * w, 0.f) {}

  float& at(int c, int y, int x) {
    return chw[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return chw[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

inline constexpr int kLatentDim = 128;
inline constexpr int kPoseDim = 3;
inline constexpr int kExprDim = 17;
inline constexpr int kConditionedDim = kLatentDim + kPoseDim + kExprDim;  // 148

struct ModelConfig {
  int resolution = 64;
  int base_width = 16;  // first conv width; deeper stages use 2x and 4x
  int d_id = 64;        // identity embedding width shared by G_enc^I and Proxy
  int c_b = 128;        // structure feature channels at the bottleneck
  int n_classes = 8;    // proxy stub classifier head
  bool share_proxy_dip = false;

  void validate() const {
    if (resolution != 32 && resolution != 64 && resolution != 128)
      throw ConfigError("unsupported resolution " + std::to_string(resolution) +
                        " (expected 32, 64 or 128)");
    if (base_width < 4) throw ConfigError("base_width must be >= 4");
    if (d_id < 1 || c_b < 1 || n_classes < 2)
      throw ConfigError("invalid model dimensions in config");
  }

  int bottleneck() const { return resolution / 8; }

  std::uint64_t hash() const {
    std::string s = "res=" + std::to_string(resolution) + ";w=" + std::to_string(base_width) +
                    ";d_id=" + std::to_string(d_id) + ";c_b=" + std::to_string(c_b) +
                    ";cls=" + std::to_string(n_classes) +
                    ";share=" + std::to_string(share_proxy_dip) + ";z=128;p=3;e=17;v=1";
    return fnv1a64(s.data(), s.size());
  }
};

namespace nn_models {

using nn::Conv2d;
using nn::InstanceNorm2d;
using nn::Linear;
using nn::ParamList;
using nn::ResBlock;
using nn::Tensor;
using nn::Var;

// Enc: boundary image -> 128-dim latent code.
template <class S>
struct BoundaryEncoder {
  BoundaryEncoder() = default;
  BoundaryEncoder(const ModelConfig& cfg, Rng& rng) {
    int w = cfg.base_width, bn = cfg.bottleneck();
    c0_ = Conv2d<S>(3, w, 3, 1, 1, rng);
    c1_ = Conv2d<S>(w, 2 * w, 3, 2, 1, rng);
    n1_ = InstanceNorm2d<S>(2 * w);
    c2_ = Conv2d<S>(2 * w, 4 * w, 3, 2, 1, rng);
    n2_ = InstanceNorm2d<S>(4 * w);
    c3_ = Conv2d<S>(4 * w, 4 * w, 3, 2, 1, rng);
    n3_ = InstanceNorm2d<S>(4 * w);
    flat_dim_ = 4 * w * bn * bn;
    fc_ = Linear<S>(flat_dim_, kLatentDim, rng);
  }

  Var<S> operator()(const Var<S>& x) const {
    using namespace nn;
    Var<S> h = leaky_relu(c0_(x));
    h = leaky_relu(n1_(c1_(h)));
    h = leaky_relu(n2_(c2_(h)));
    h = leaky_relu(n3_(c3_(h)));
    h = reshape(h, {h.value().dim(0), static_cast<std::size_t>(flat_dim_)});
    return fc_(h);
  }

  void collect(const std::string& p, ParamList<S>& out) {
    c0_.collect(p + ".c0", out);
    c1_.collect(p + ".c1", out);
    n1_.collect(p + ".n1", out);
    c2_.collect(p + ".c2", out);
    n2_.collect(p + ".n2", out);
    c3_.collect(p + ".c3", out);
    n3_.collect(p + ".n3", out);
    fc_.collect(p + ".fc", out);
  }

  Conv2d<S> c0_, c1_, c2_, c3_;
  InstanceNorm2d<S> n1_, n2_, n3_;
  Linear<S> fc_;
  int flat_dim_ = 0;
};

// Dec: (z, p, e) -> boundary raster in [0,1].
template <class S>
struct BoundaryDecoder {
  BoundaryDecoder() = default;
  BoundaryDecoder(const ModelConfig& cfg, Rng& rng) : bn_(cfg.bottleneck()) {
    int w = cfg.base_width;
    ch0_ = 4 * w;
    fc_ = Linear<S>(kConditionedDim, ch0_ * bn_ * bn_, rng);
    res_ = ResBlock<S>(ch0_, rng);
    u1_ = Conv2d<S>(ch0_, 2 * w, 3, 1, 1, rng);
    n1_ = InstanceNorm2d<S>(2 * w);
    u2_ = Conv2d<S>(2 * w, w, 3, 1, 1, rng);
    n2_ = InstanceNorm2d<S>(w);
    u3_ = Conv2d<S>(w, w, 3, 1, 1, rng);
    n3_ = InstanceNorm2d<S>(w);
    out_ = Conv2d<S>(w, 3, 3, 1, 1, rng);
  }

  // cond: [N, 148] = concat(z, p, e)
  Var<S> operator()(const Var<S>& cond) const {
    using namespace nn;
    require(cond.value().rank() == 2 &&
                cond.value().dim(1) == static_cast<std::size_t>(kConditionedDim),
            "BoundaryDecoder: conditioning vector must be 148-dim");
    std::size_t n = cond.value().dim(0);
    Var<S> h = leaky_relu(fc_(cond));
    h = reshape(h, {n, static_cast<std::size_t>(ch0_), static_cast<std::size_t>(bn_),
                    static_cast<std::size_t>(bn_)});
    h = res_(h);
    h = leaky_relu(n1_(u1_(upsample_nearest2(h))));
    h = leaky_relu(n2_(u2_(upsample_nearest2(h))));
    h = leaky_relu(n3_(u3_(upsample_nearest2(h))));
    return sigmoid(out_(h));
  }

  void collect(const std::string& p, ParamList<S>& out) {
    fc_.collect(p + ".fc", out);
    res_.collect(p + ".res", out);
    u1_.collect(p + ".u1", out);
    n1_.collect(p + ".n1", out);
    u2_.collect(p + ".u2", out);
    n2_.collect(p + ".n2", out);
    u3_.collect(p + ".u3", out);
    n3_.collect(p + ".n3", out);
    out_.collect(p + ".out", out);
  }

  Linear<S> fc_;
  ResBlock<S> res_;
  Conv2d<S> u1_, u2_, u3_, out_;
  InstanceNorm2d<S> n1_, n2_, n3_;
  int bn_ = 0, ch0_ = 0;
};

// Shared conv trunk of the estimators and the identity nets.
template <class S>
struct ConvTrunk {
  ConvTrunk() = default;
  ConvTrunk(int cin, int w, int cout, Rng& rng) {
    c0_ = Conv2d<S>(cin, w, 3, 2, 1, rng);
    c1_ = Conv2d<S>(w, 2 * w, 3, 2, 1, rng);
    c2_ = Conv2d<S>(2 * w, cout, 3, 2, 1, rng);
  }

  // [N, cin, R, R] -> [N, cout] (global average pooled)
  Var<S> operator()(const Var<S>& x) const {
    using namespace nn;
    Var<S> h = leaky_relu(c0_(x));
    h = leaky_relu(c1_(h));
    h = leaky_relu(c2_(h));
    return global_avg_pool(h);
  }

  void collect(const std::string& p, ParamList<S>& out) {
    c0_.collect(p + ".c0", out);
    c1_.collect(p + ".c1", out);
    c2_.collect(p + ".c2", out);
  }

  Conv2d<S> c0_, c1_, c2_;
};

// F_p: boundary -> pose vector (linear head).
template <class S>
struct PoseEstimator {
  PoseEstimator() = default;
  PoseEstimator(const ModelConfig& cfg, Rng& rng)
      : trunk_(3, cfg.base_width, 4 * cfg.base_width, rng),
        head_(4 * cfg.base_width, kPoseDim, rng) {}

  Var<S> operator()(const Var<S>& x) const { return head_(trunk_(x)); }

  void collect(const std::string& p, ParamList<S>& out) {
    trunk_.collect(p + ".trunk", out);
    head_.collect(p + ".head", out);
  }

  ConvTrunk<S> trunk_;
  Linear<S> head_;
};

// F_e: boundary -> AU intensities in [0,1] (sigmoid head).
template <class S>
struct ExprEstimator {
  ExprEstimator() = default;
  ExprEstimator(const ModelConfig& cfg, Rng& rng)
      : trunk_(3, cfg.base_width, 4 * cfg.base_width, rng),
        head_(4 * cfg.base_width, kExprDim, rng) {}

  Var<S> operator()(const Var<S>& x) const { return nn::sigmoid(head_(trunk_(x))); }

  void collect(const std::string& p, ParamList<S>& out) {
    trunk_.collect(p + ".trunk", out);
    head_.collect(p + ".head", out);
  }

  ConvTrunk<S> trunk_;
  Linear<S> head_;
};

// G_enc^B: boundary -> structure feature map [c_b, R/8, R/8].
template <class S>
struct StructureEncoder {
  StructureEncoder() = default;
  StructureEncoder(const ModelConfig& cfg, Rng& rng) {
    int w = cfg.base_width;
    c0_ = Conv2d<S>(3, w, 3, 1, 1, rng);
    c1_ = Conv2d<S>(w, 2 * w, 3, 2, 1, rng);
    n1_ = InstanceNorm2d<S>(2 * w);
    c2_ = Conv2d<S>(2 * w, 4 * w, 3, 2, 1, rng);
    n2_ = InstanceNorm2d<S>(4 * w);
    c3_ = Conv2d<S>(4 * w, cfg.c_b, 3, 2, 1, rng);
    n3_ = InstanceNorm2d<S>(cfg.c_b);
    res_ = ResBlock<S>(cfg.c_b, rng);
  }

  Var<S> operator()(const Var<S>& x) const {
    using namespace nn;
    Var<S> h = leaky_relu(c0_(x));
    h = leaky_relu(n1_(c1_(h)));
    h = leaky_relu(n2_(c2_(h)));
    h = leaky_relu(n3_(c3_(h)));
    return res_(h);
  }

  void collect(const std::string& p, ParamList<S>& out) {
    c0_.collect(p + ".c0", out);
    c1_.collect(p + ".c1", out);
    n1_.collect(p + ".n1", out);
    c2_.collect(p + ".c2", out);
    n2_.collect(p + ".n2", out);
    c3_.collect(p + ".c3", out);
    n3_.collect(p + ".n3", out);
    res_.collect(p + ".res", out);
  }

  Conv2d<S> c0_, c1_, c2_, c3_;
  InstanceNorm2d<S> n1_, n2_, n3_;
  ResBlock<S> res_;
};

// G_enc^I: face -> global identity/texture embedding [d_id].
template <class S>
struct TextureEncoder {
  TextureEncoder() = default;
  TextureEncoder(const ModelConfig& cfg, Rng& rng)
      : trunk_(3, cfg.base_width, 4 * cfg.base_width, rng),
        head_(4 * cfg.base_width, cfg.d_id, rng) {}

  Var<S> operator()(const Var<S>& x) const { return head_(trunk_(x)); }

  void collect(const std::string& p, ParamList<S>& out) {
    trunk_.collect(p + ".trunk", out);
    head_.collect(p + ".head", out);
  }

  ConvTrunk<S> trunk_;
  Linear<S> head_;
};

// G_dec^I: (f_B, tiled f_I) -> face in (-1,1).
template <class S>
struct FaceDecoder {
  FaceDecoder() = default;
  FaceDecoder(const ModelConfig& cfg, Rng& rng) {
    int w = cfg.base_width;
    in_ = Conv2d<S>(cfg.c_b + cfg.d_id, 4 * w, 3, 1, 1, rng);
    nin_ = InstanceNorm2d<S>(4 * w);
    res_ = ResBlock<S>(4 * w, rng);
    u1_ = Conv2d<S>(4 * w, 2 * w, 3, 1, 1, rng);
    n1_ = InstanceNorm2d<S>(2 * w);
    u2_ = Conv2d<S>(2 * w, w, 3, 1, 1, rng);
    n2_ = InstanceNorm2d<S>(w);
    u3_ = Conv2d<S>(w, w, 3, 1, 1, rng);
    n3_ = InstanceNorm2d<S>(w);
    out_ = Conv2d<S>(w, 3, 3, 1, 1, rng);
  }

  Var<S> operator()(const Var<S>& f_b, const Var<S>& f_i) const {
    using namespace nn;
    require(f_b.value().rank() == 4, "FaceDecoder: f_B must be a feature map");
    require(f_i.value().rank() == 2, "FaceDecoder: f_I must be a feature vector");
    std::size_t h = f_b.value().dim(2), w = f_b.value().dim(3);
    Var<S> fi_map = tile_spatial(f_i, h, w);
    Var<S> x = concat_channels(f_b, fi_map);
    require(x.value().dim(1) == in_.w_.value().dim(1),
            "FaceDecoder: f_I width does not match decoder input channels");
    x = leaky_relu(nin_(in_(x)));
    x = res_(x);
    x = leaky_relu(n1_(u1_(upsample_nearest2(x))));
    x = leaky_relu(n2_(u2_(upsample_nearest2(x))));
    x = leaky_relu(n3_(u3_(upsample_nearest2(x))));
    return tanh_(out_(x));
  }

  void collect(const std::string& p, ParamList<S>& out) {
    in_.collect(p + ".in", out);
    nin_.collect(p + ".nin", out);
    res_.collect(p + ".res", out);
    u1_.collect(p + ".u1", out);
    n1_.collect(p + ".n1", out);
    u2_.collect(p + ".u2", out);
    n2_.collect(p + ".n2", out);
    u3_.collect(p + ".u3", out);
    n3_.collect(p + ".n3", out);
    out_.collect(p + ".out", out);
  }

  Conv2d<S> in_, u1_, u2_, u3_, out_;
  InstanceNorm2d<S> nin_, n1_, n2_, n3_;
  ResBlock<S> res_;
};

template <class S>
struct IdentityFeatures {
  Var<S> pool;  // last pooling layer output, [N, d_id]
  Var<S> fc;    // classifier logits, [N, n_classes]
};

// Proxy / D_ip: face -> (pooled embedding, class logits).
template <class S>
struct IdentityNet {
  IdentityNet() = default;
  IdentityNet(const ModelConfig& cfg, Rng& rng)
      : trunk_(3, cfg.base_width, cfg.d_id, rng), head_(cfg.d_id, cfg.n_classes, rng) {}

  IdentityFeatures<S> operator()(const Var<S>& x) const {
    Var<S> pool = trunk_(x);
    return {pool, head_(pool)};
  }

  void collect(const std::string& p, ParamList<S>& out) {
    trunk_.collect(p + ".trunk", out);
    head_.collect(p + ".head", out);
  }

  ConvTrunk<S> trunk_;
  Linear<S> head_;
};

// One patch discriminator; the multi-scale set runs three of these on
// average-pooled input pyramids.
template <class S>
struct PatchDiscriminator {
  PatchDiscriminator() = default;
  PatchDiscriminator(const ModelConfig& cfg, Rng& rng) {
    int w = cfg.base_width;
    c0_ = Conv2d<S>(6, w, 3, 2, 1, rng);
    c1_ = Conv2d<S>(w, 2 * w, 3, 2, 1, rng);
    n1_ = InstanceNorm2d<S>(2 * w);
    c2_ = Conv2d<S>(2 * w, 1, 3, 1, 1, rng);
  }

  Var<S> operator()(const Var<S>& pair) const {
    using namespace nn;
    Var<S> h = leaky_relu(c0_(pair));
    h = leaky_relu(n1_(c1_(h)));
    return sigmoid(c2_(h));
  }

  void collect(const std::string& p, ParamList<S>& out) {
    c0_.collect(p + ".c0", out);
    c1_.collect(p + ".c1", out);
    n1_.collect(p + ".n1", out);
    c2_.collect(p + ".c2", out);
  }

  Conv2d<S> c0_, c1_, c2_;
  InstanceNorm2d<S> n1_;
};

}  // namespace nn_models

// All nine networks plus the configuration that shaped them.
template <class S>
struct NetworkBundle {
  ModelConfig cfg;
  std::uint64_t init_seed = 0;

  nn_models::BoundaryEncoder<S> enc;
  nn_models::BoundaryDecoder<S> dec;
  nn_models::PoseEstimator<S> f_p;
  nn_models::ExprEstimator<S> f_e;
  nn_models::StructureEncoder<S> g_enc_b;
  nn_models::TextureEncoder<S> g_enc_i;
  nn_models::FaceDecoder<S> g_dec_i;
  nn_models::IdentityNet<S> proxy;
  nn_models::IdentityNet<S> d_ip;
  std::array<nn_models::PatchDiscriminator<S>, 3> d;

  nn::ParamList<S> params_enc_dec() {
    nn::ParamList<S> out;
    enc.collect("enc", out);
    dec.collect("dec", out);
    return out;
  }
  nn::ParamList<S> params_estimators() {
    nn::ParamList<S> out;
    f_p.collect("fp", out);
    f_e.collect("fe", out);
    return out;
  }
  nn::ParamList<S> params_generator() {
    nn::ParamList<S> out;
    g_enc_b.collect("genc_b", out);
    g_enc_i.collect("genc_i", out);
    g_dec_i.collect("gdec_i", out);
    return out;
  }
  nn::ParamList<S> params_discriminators() {
    nn::ParamList<S> out;
    for (int i = 0; i < 3; ++i) d[i].collect("d" + std::to_string(i), out);
    return out;
  }
  nn::ParamList<S> params_proxy() {
    nn::ParamList<S> out;
    proxy.collect("proxy", out);
    return out;
  }
  nn::ParamList<S> params_dip() {
    nn::ParamList<S> out;
    d_ip.collect("dip", out);
    return out;
  }
  nn::ParamList<S> params_all() {
    nn::ParamList<S> out;
    for (auto&& group :
         {params_enc_dec(), params_estimators(), params_generator(),
          params_discriminators(), params_proxy(), params_dip()})
      for (auto& p : group) out.push_back(p);
    return out;
  }
};

// Deterministic seeded initialization of all nine networks. Each network gets
// its own derived stream so parameter draws are stable under unrelated edits.
template <class S>
NetworkBundle<S> init_networks(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkBundle<S> b;
  b.cfg = cfg;
  b.init_seed = seed;
  auto net_rng = [&](int k) { return Rng(mix_seed(seed) ^ (0x5851f42d4c957f2dull * k)); };
  Rng r0 = net_rng(1);
  b.enc = nn_models::BoundaryEncoder<S>(cfg, r0);
  Rng r1 = net_rng(2);
  b.dec = nn_models::BoundaryDecoder<S>(cfg, r1);
  Rng r2 = net_rng(3);
  b.f_p = nn_models::PoseEstimator<S>(cfg, r2);
  Rng r3 = net_rng(4);
  b.f_e = nn_models::ExprEstimator<S>(cfg, r3);
  Rng r4 = net_rng(5);
  b.g_enc_b = nn_models::StructureEncoder<S>(cfg, r4);
  Rng r5 = net_rng(6);
  b.g_enc_i = nn_models::TextureEncoder<S>(cfg, r5);
  Rng r6 = net_rng(7);
  b.g_dec_i = nn_models::FaceDecoder<S>(cfg, r6);
  Rng r7 = net_rng(8);
  b.proxy = nn_models::IdentityNet<S>(cfg, r7);
  if (cfg.share_proxy_dip) {
    b.d_ip = b.proxy;  // shares parameter nodes
  } else {
    Rng r8 = net_rng(9);
    b.d_ip = nn_models::IdentityNet<S>(cfg, r8);
  }
  for (int i = 0; i < 3; ++i) {
    Rng rd = net_rng(10 + i);
    b.d[i] = nn_models::PatchDiscriminator<S>(cfg, rd);
  }
  return b;
}

// ---- batch assembly --------------------------------------------------------

template <class S, class Raster>
nn::Tensor<S> to_batch(const std::vector<const Raster*>& images) {
  require(!images.empty(), "to_batch: empty batch");
  int h = images[0]->height, w = images[0]->width;
  nn::Tensor<S> t({images.size(), 3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t n = 0; n < images.size(); ++n) {
    require(images[n]->height == h && images[n]->width == w, "to_batch: mixed resolutions");
    const auto& src = images[n]->chw;
    std::size_t plane = src.size();
    for (std::size_t i = 0; i < plane; ++i) t[n * plane + i] = static_cast<S>(src[i]);
  }
  return t;
}

template <class S>
nn::Tensor<S> pose_batch(const std::vector<PoseVector>& poses) {
  nn::Tensor<S> t({poses.size(), static_cast<std::size_t>(kPoseDim)});
  for (std::size_t n = 0; n < poses.size(); ++n)
    for (int j = 0; j < kPoseDim; ++j) t.at(n, j) = static_cast<S>(poses[n].v[j]);
  return t;
}

template <class S>
nn::Tensor<S> expr_batch(const std::vector<ExpressionVector>& exprs) {
  nn::Tensor<S> t({exprs.size(), static_cast<std::size_t>(kExprDim)});
  for (std::size_t n = 0; n < exprs.size(); ++n)
    for (int j = 0; j < kExprDim; ++j) t.at(n, j) = static_cast<S>(exprs[n].v[j]);
  return t;
}

// ---- spec-level forward contracts -------------------------------------------

template <class S>
struct BoundaryAutoencoderOut {
  nn::Var<S> z;
  nn::Var<S> b_hat;
};

// z = Enc(B); B_hat = Dec(concat(z, p, e)).
template <class S>
BoundaryAutoencoderOut<S> forward_boundary_autoencoder(
    const nn_models::BoundaryEncoder<S>& enc, const nn_models::BoundaryDecoder<S>& dec,
    const nn::Var<S>& boundary, const nn::Var<S>& pose, const nn::Var<S>& expr) {
  nn::Var<S> z = enc(boundary);
  nn::Var<S> cond = nn::concat_cols<S>({z, pose, expr});
  return {z, dec(cond)};
}

template <class S>
struct EstimatorOut {
  nn::Var<S> pose;
  nn::Var<S> expr;
};

template <class S>
EstimatorOut<S> forward_estimators(const nn_models::PoseEstimator<S>& f_p,
                                   const nn_models::ExprEstimator<S>& f_e,
                                   const nn::Var<S>& boundary) {
  return {f_p(boundary), f_e(boundary)};
}

template <class S>
struct SynthesisOut {
  nn::Var<S> f_b;
  nn::Var<S> f_i;
  nn::Var<S> i_hat;
};

template <class S>
SynthesisOut<S> forward_synthesis(const nn_models::StructureEncoder<S>& g_enc_b,
                                  const nn_models::TextureEncoder<S>& g_enc_i,
                                  const nn_models::FaceDecoder<S>& g_dec_i,
                                  const nn::Var<S>& b_hat, const nn::Var<S>& i_a) {
  nn::Var<S> f_b = g_enc_b(b_hat);
  nn::Var<S> f_i = g_enc_i(i_a);
  return {f_b, f_i, g_dec_i(f_b, f_i)};
}

// The pair (I, B) is channel-concatenated and judged at scales 1, 1/2, 1/4.
template <class S>
std::vector<nn::Var<S>> forward_discriminators(
    const std::array<nn_models::PatchDiscriminator<S>, 3>& d, const nn::Var<S>& image,
    const nn::Var<S>& boundary) {
  require(image.value().same_shape(boundary.value()),
          "forward_discriminators: image/boundary resolution mismatch");
  nn::Var<S> pair = nn::concat_channels(image, boundary);
  std::vector<nn::Var<S>> maps;
  maps.push_back(d[0](pair));
  nn::Var<S> half = nn::avg_pool2d(pair, 2);
  maps.push_back(d[1](half));
  maps.push_back(d[2](nn::avg_pool2d(half, 2)));
  return maps;
}

template <class S>
nn_models::IdentityFeatures<S> identity_features(const nn_models::IdentityNet<S>& net,
                                                 const nn::Var<S>& image) {
  return net(image);
}

}  // namespace facemanip
