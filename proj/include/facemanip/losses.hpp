#pragma once

#include <vector>

#include "facemanip/ops.hpp"

namespace facemanip {

// Trade-off weights and threshold margin. Defaults follow the reference
// training recipe: lambda1 0.1, alpha (0.01, 50, 0.02), m = 7.
struct LossWeights {
  double lambda1 = 0.1;   // conditional regression weight (stage 1)
  double alpha1 = 0.01;   // feature threshold weight
  double alpha2 = 50.0;   // multi-scale pixel weight
  double alpha3 = 0.02;   // identity preserving weight
  double margin_m = 7.0;  // feature threshold margin

  void validate() const {
    if (lambda1 < 0 || alpha1 < 0 || alpha2 < 0 || alpha3 < 0)
      throw ConfigError("loss weights must be non-negative");
    if (!(margin_m > 0)) throw ConfigError("threshold margin m must be positive");
  }
};

inline constexpr double kLogClamp = 1e-7;

namespace losses {

using nn::Var;

// Pixel-wise L1 between predicted and ground-truth boundary rasters,
// mean over all pixels and channels.
template <class S>
Var<S> pixel_boundary_loss(const Var<S>& b_hat, const Var<S>& b) {
  require(b_hat.value().same_shape(b.value()), "pixel_boundary_loss: shape mismatch");
  return nn::l1(b_hat, b);
}

// Pose regression MSE plus expression regression MSE.
template <class S>
Var<S> conditional_regression_loss(const Var<S>& p_hat, const Var<S>& p_ref,
                                   const Var<S>& e_hat, const Var<S>& e_ref) {
  require(p_hat.value().same_shape(p_ref.value()) && p_hat.value().rank() == 2 &&
              p_hat.value().dim(1) == 3,
          "conditional_regression_loss: pose dims must be [N,3]");
  require(e_hat.value().same_shape(e_ref.value()) && e_hat.value().rank() == 2 &&
              e_hat.value().dim(1) == 17,
          "conditional_regression_loss: expression dims must be [N,17]");
  return nn::add(nn::mse(p_hat, p_ref), nn::mse(e_hat, e_ref));
}

// Hinge on the squared euclidean distance between the learned embedding and
// the proxy embedding: max(0, ||f_I - f_P||^2 - m), mean over the batch.
// Zero exactly when the squared distance is within the margin.
template <class S>
Var<S> feature_threshold_loss(const Var<S>& f_i, const Var<S>& f_p, double m) {
  if (!(m > 0)) throw ConfigError("feature_threshold_loss: margin must be positive");
  require(f_i.value().same_shape(f_p.value()) && f_i.value().rank() == 2,
          "feature_threshold_loss: embeddings must be [N,D] with equal dims");
  Var<S> d = nn::sub(f_i, f_p);
  Var<S> sq = nn::row_sum(nn::mul(d, d));                      // [N]
  Var<S> hinge = nn::relu_(nn::add_scalar(sq, S(-m)));         // [N]
  return nn::mean_all(hinge);
}

// Mean L1 summed over an average-pooled pyramid at scales 1, 1/2, 1/4.
template <class S>
Var<S> multiscale_pixel_loss(const Var<S>& i_hat, const Var<S>& i_ref) {
  require(i_hat.value().same_shape(i_ref.value()) && i_hat.value().rank() == 4,
          "multiscale_pixel_loss: shape mismatch");
  require(i_hat.value().dim(2) % 4 == 0 && i_hat.value().dim(3) % 4 == 0,
          "multiscale_pixel_loss: resolution must be divisible by 4");
  Var<S> total = nn::l1(i_hat, i_ref);
  Var<S> a2 = nn::avg_pool2d(i_hat, 2), b2 = nn::avg_pool2d(i_ref, 2);
  total = nn::add(total, nn::l1(a2, b2));
  return nn::add(total, nn::l1(nn::avg_pool2d(a2, 2), nn::avg_pool2d(b2, 2)));
}

template <class S>
struct AdversarialLosses {
  Var<S> d_loss;
  Var<S> g_loss;
};

// Vanilla conditional GAN objective over the three discriminator scales:
//   d_loss = -mean_s mean_patches [log D(real) + log(1 - D(fake))]
//   g_loss = -mean_s mean_patches log D(fake)        (non-saturating)
// Logs are clamped at 1e-7. The caller detaches fake maps for the D side.
template <class S>
AdversarialLosses<S> adversarial_losses(const std::vector<Var<S>>& real_maps,
                                        const std::vector<Var<S>>& fake_maps) {
  require(real_maps.size() == 3 && fake_maps.size() == 3,
          "adversarial_losses: expected 3 real and 3 fake maps");
  for (std::size_t s = 0; s < 3; ++s) {
    require(real_maps[s].value().same_shape(fake_maps[s].value()),
            "adversarial_losses: map shape mismatch at scale " + std::to_string(s));
    for (const auto* mp : {&real_maps[s], &fake_maps[s]})
      for (std::size_t i = 0; i < mp->value().numel(); ++i) {
        S v = mp->value()[i];
        if (!(v >= S(0) && v <= S(1)))
          throw ContractError("adversarial_losses: map value outside [0,1]");
      }
  }
  const S eps = S(kLogClamp);
  Var<S> d_acc, g_acc;
  for (std::size_t s = 0; s < 3; ++s) {
    Var<S> log_real = nn::log_clamped(real_maps[s], eps);
    Var<S> log_one_minus_fake =
        nn::log_clamped(nn::add_scalar(nn::neg(fake_maps[s]), S(1)), eps);
    Var<S> d_s = nn::add(nn::mean_all(log_real), nn::mean_all(log_one_minus_fake));
    Var<S> g_s = nn::mean_all(nn::log_clamped(fake_maps[s], eps));
    d_acc = s == 0 ? d_s : nn::add(d_acc, d_s);
    g_acc = s == 0 ? g_s : nn::add(g_acc, g_s);
  }
  return {nn::mul_scalar(d_acc, S(-1.0 / 3.0)), nn::mul_scalar(g_acc, S(-1.0 / 3.0))};
}

// MSE of pooled features plus MSE of fully-connected features. References are
// detached internally so gradients only reach the synthesized branch.
template <class S>
Var<S> identity_preserving_loss(const Var<S>& pool_hat, const Var<S>& fc_hat,
                                const Var<S>& pool_ref, const Var<S>& fc_ref) {
  require(pool_hat.value().same_shape(pool_ref.value()),
          "identity_preserving_loss: pool feature dims mismatch");
  require(fc_hat.value().same_shape(fc_ref.value()),
          "identity_preserving_loss: fc feature dims mismatch");
  return nn::add(nn::mse(pool_hat, pool_ref.detach()), nn::mse(fc_hat, fc_ref.detach()));
}

// Stage-1 total: L_pix-bound + lambda1 * L_reg.
template <class S>
Var<S> stage1_total(const Var<S>& pix, const Var<S>& reg, const LossWeights& w) {
  return nn::add(pix, nn::mul_scalar(reg, S(w.lambda1)));
}

// Stage-2 generator total: L_adv + a1*L_thr + a2*L_pix-mul + a3*L_ip.
template <class S>
Var<S> stage2_total(const Var<S>& adv_g, const Var<S>& thr, const Var<S>& pixmul,
                    const Var<S>& ip, const LossWeights& w) {
  Var<S> total = nn::add(adv_g, nn::mul_scalar(thr, S(w.alpha1)));
  total = nn::add(total, nn::mul_scalar(pixmul, S(w.alpha2)));
  return nn::add(total, nn::mul_scalar(ip, S(w.alpha3)));
}

}  // namespace losses

}  // namespace facemanip
