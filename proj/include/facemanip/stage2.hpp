#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "facemanip/stage1.hpp"

namespace facemanip {

// ---- proxy stub training -------------------------------------------------------

struct ProxyTrainOptions {
  int max_steps = 3000;
  int batch_size = 16;
  int eval_interval = 100;
  int plateau_patience = 8;
  int log_interval = 10;
  double lr = 2e-4, beta1 = 0.9, beta2 = 0.999;
  std::optional<double> stop_at_accuracy;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct ProxyTrainResult {
  std::string checkpoint_path;
  double val_accuracy = 0.0;
  int steps_run = 0;
  std::vector<std::string> class_names;
};

namespace stage2_detail {

inline std::vector<std::string> class_names_of(const std::vector<TrainingExample>& ex) {
  std::set<std::string> ids;
  for (const auto& e : ex) ids.insert(e.identity);
  return {ids.begin(), ids.end()};
}

inline std::vector<std::size_t> labels_of(const std::vector<TrainingExample>& ex,
                                          const std::vector<std::size_t>& idx,
                                          const std::map<std::string, std::size_t>& by_name) {
  std::vector<std::size_t> out;
  for (auto i : idx) out.push_back(by_name.at(ex[i].identity));
  return out;
}

template <class S>
double proxy_accuracy(NetworkBundle<S>& bundle, const std::vector<TrainingExample>& data,
                      const std::map<std::string, std::size_t>& by_name, int batch_size) {
  std::size_t correct = 0;
  for (std::size_t off = 0; off < data.size(); off += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = off; i < std::min(data.size(), off + batch_size); ++i)
      idx.push_back(i);
    auto x = nn::Var<S>::constant(gather_faces<S>(data, idx));
    auto feats = bundle.proxy(x);
    const auto& logits = feats.fc.value();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < logits.dim(1); ++j)
        if (logits.at(i, j) > logits.at(i, arg)) arg = j;
      if (arg == by_name.at(data[idx[i]].identity)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace stage2_detail

// Cross-entropy identity classifier; its pooled features later serve as f_P.
template <class S>
ProxyTrainResult train_proxy_stub(NetworkBundle<S>& bundle,
                                  const std::vector<TrainingExample>& train,
                                  const std::vector<TrainingExample>& val,
                                  const ProxyTrainOptions& opts) {
  if (train.empty()) throw DataError("train_proxy_stub: empty training set");
  auto class_names = stage2_detail::class_names_of(train);
  if (class_names.size() < 2)
    throw DataError("train_proxy_stub: need at least 2 identities, got " +
                    std::to_string(class_names.size()));
  if (class_names.size() > static_cast<std::size_t>(bundle.cfg.n_classes))
    throw ConfigError("train_proxy_stub: " + std::to_string(class_names.size()) +
                      " identities exceed configured n_classes");
  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < class_names.size(); ++i) by_name[class_names[i]] = i;

  nn::ParamList<S> params = bundle.params_proxy();
  nn::set_trainable(params, true);
  nn::Adam<S> adam(params, opts.lr, opts.beta1, opts.beta2);
  LossLog log(opts.out_dir);
  BatchStream batches(train.size(), opts.batch_size, Rng(mix_seed(opts.seed) ^ 0x9a0b));
  const std::vector<TrainingExample>& eval_set = val.empty() ? train : val;

  double best = -1.0;
  int since_best = 0;
  int steps = 0;
  double acc = 0.0;
  for (; steps < opts.max_steps; ++steps) {
    auto idx = batches.next();
    auto x = nn::Var<S>::constant(gather_faces<S>(train, idx));
    auto feats = bundle.proxy(x);
    auto loss = nn::softmax_cross_entropy(feats.fc,
                                          stage2_detail::labels_of(train, idx, by_name));
    check_finite_or_abort(loss, steps, opts.out_dir, "train_proxy_stub");
    nn::backward(loss);
    adam.step();
    adam.zero_grad();
    if (opts.log_interval > 0 && steps % opts.log_interval == 0)
      log.log(steps, "proxy_ce", static_cast<double>(loss.value()[0]));

    if ((steps + 1) % opts.eval_interval == 0 || steps + 1 == opts.max_steps) {
      acc = stage2_detail::proxy_accuracy(bundle, eval_set, by_name, opts.batch_size);
      log.log(steps + 1, "proxy_val_acc", acc);
      if (opts.stop_at_accuracy && acc >= *opts.stop_at_accuracy) {
        ++steps;
        break;
      }
      if (acc > best + 1e-9) {
        best = acc;
        since_best = 0;
      } else if (++since_best >= opts.plateau_patience) {
        ++steps;
        break;
      }
    }
  }

  ProxyTrainResult res;
  res.val_accuracy =
      stage2_detail::proxy_accuracy(bundle, eval_set, by_name, opts.batch_size);
  res.steps_run = steps;
  res.class_names = class_names;
  if (!opts.out_dir.empty()) {
    nlohmann::json extra;
    extra["val_accuracy"] = res.val_accuracy;
    extra["classes"] = class_names;
    CheckpointMeta meta;
    meta.stage = Stage::proxy;
    meta.step = static_cast<std::uint64_t>(steps);
    meta.config_hash = opts.config_hash ? opts.config_hash : bundle.cfg.hash();
    meta.extra = extra.dump();
    res.checkpoint_path = (std::filesystem::path(opts.out_dir) / "proxy.fmck").string();
    save_checkpoint(res.checkpoint_path, meta, params);
  }
  log.flush();
  return res;
}

// ---- disentangled synthesis training ---------------------------------------------

struct Stage2TrainOptions {
  int max_steps = 4000;
  int batch_size = 8;
  int checkpoint_interval = 500;
  int log_interval = 10;
  double lr = 2e-4, beta1 = 0.9, beta2 = 0.999;
  LossWeights weights;
  bool use_predicted_boundary = true;  // false: condition on ground-truth rasters
  std::optional<double> stop_at_pixmul;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct Stage2TrainResult {
  std::string checkpoint_path;
  double final_pixmul = 0.0, final_g_total = 0.0, final_d_loss = 0.0;
  double final_thr = 0.0, final_ip = 0.0, final_g_adv = 0.0;
  int steps_run = 0;
  std::uint64_t d_steps = 0, g_steps = 0;
  // mean ||f_I - f_P||^2 on the held-out batch, sampled at checkpoint cadence
  // (index 0 is the pre-training value).
  std::vector<double> heldout_feat_sqdist;
};

namespace stage2_detail {

template <class S>
double heldout_feature_distance(NetworkBundle<S>& bundle,
                                const std::vector<TrainingExample>& batch) {
  auto x = nn::Var<S>::constant(gather_faces<S>(
      batch, [&] {
        std::vector<std::size_t> idx(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) idx[i] = i;
        return idx;
      }()));
  auto f_i = bundle.g_enc_i(x);
  auto f_p = bundle.proxy(x).pool;
  double acc = 0.0;
  for (std::size_t i = 0; i < f_i.value().dim(0); ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < f_i.value().dim(1); ++j) {
      double d = static_cast<double>(f_i.value().at(i, j)) -
                 static_cast<double>(f_p.value().at(i, j));
      d2 += d * d;
    }
    acc += d2;
  }
  return acc / static_cast<double>(f_i.value().dim(0));
}

}  // namespace stage2_detail

// Alternating D/G optimization of the synthesis stage. Enc/Dec (stage 1),
// F_p/F_e, Proxy and D_ip stay frozen; the boundary fed to both G and D is
// the stage-1 prediction unless use_predicted_boundary is off.
template <class S>
Stage2TrainResult train_synthesis_stage(NetworkBundle<S>& bundle,
                                        const std::vector<TrainingExample>& train,
                                        const std::vector<TrainingExample>& heldout,
                                        const Stage2TrainOptions& opts) {
  opts.weights.validate();
  if (train.empty()) throw DataError("train_synthesis_stage: empty training set");

  for (auto&& frozen : {bundle.params_enc_dec(), bundle.params_estimators(),
                        bundle.params_proxy(), bundle.params_dip()}) {
    auto group = frozen;
    nn::set_trainable(group, false);
  }
  nn::ParamList<S> g_params = bundle.params_generator();
  nn::ParamList<S> d_params = bundle.params_discriminators();
  nn::set_trainable(g_params, true);
  nn::set_trainable(d_params, true);
  nn::Adam<S> adam_g(g_params, opts.lr, opts.beta1, opts.beta2);
  nn::Adam<S> adam_d(d_params, opts.lr, opts.beta1, opts.beta2);
  LossLog log(opts.out_dir);

  PairSampler sampler(
      train, PairPolicy{},
      std::function<std::string(const TrainingExample&)>(pair_group_key),
      std::function<std::string(const TrainingExample&)>(condition_key));
  Rng pair_rng(mix_seed(opts.seed) ^ 0x57a6e2);

  // Boundary conditioning per (source, target) pair; stage-1 predictions are
  // deterministic so they are computed once and cached.
  std::map<std::pair<std::size_t, std::size_t>, BoundaryImage> pred_cache;
  auto conditioning_boundary = [&](std::size_t a, std::size_t b) -> const BoundaryImage& {
    if (!opts.use_predicted_boundary) return train[b].boundary;
    auto key = std::make_pair(a, b);
    auto it = pred_cache.find(key);
    if (it == pred_cache.end()) {
      BoundaryImage pred =
          predict_boundary(bundle, train[a].boundary, train[b].pose, train[b].expr);
      it = pred_cache.emplace(key, std::move(pred)).first;
    }
    return it->second;
  };

  const std::vector<TrainingExample>& held = heldout.empty() ? train : heldout;

  Stage2TrainResult res;
  res.heldout_feat_sqdist.push_back(stage2_detail::heldout_feature_distance(bundle, held));

  auto save = [&](int step) {
    nlohmann::json extra;
    extra["pixmul"] = res.final_pixmul;
    extra["g_total"] = res.final_g_total;
    extra["d_loss"] = res.final_d_loss;
    extra["heldout_feat_sqdist"] = res.heldout_feat_sqdist;
    CheckpointMeta meta;
    meta.stage = Stage::synthesis;
    meta.step = static_cast<std::uint64_t>(step);
    meta.config_hash = opts.config_hash ? opts.config_hash : bundle.cfg.hash();
    meta.extra = extra.dump();
    nn::ParamList<S> all = g_params;
    for (auto& p : d_params) all.push_back(p);
    std::string path = (std::filesystem::path(opts.out_dir) / "stage2.fmck").string();
    save_checkpoint(path, meta, all);
    return path;
  };

  int steps = 0;
  for (; steps < opts.max_steps; ++steps) {
    std::vector<std::size_t> src_idx, tgt_idx;
    std::vector<const BoundaryImage*> cond_ptrs;
    for (int i = 0; i < opts.batch_size; ++i) {
      auto [a, b] = sampler.next(pair_rng);
      src_idx.push_back(a);
      tgt_idx.push_back(b);
      cond_ptrs.push_back(&conditioning_boundary(a, b));
    }
    auto i_a = nn::Var<S>::constant(gather_faces<S>(train, src_idx));
    auto i_b = nn::Var<S>::constant(gather_faces<S>(train, tgt_idx));
    auto b_cond = nn::Var<S>::constant(to_batch<S>(cond_ptrs));

    auto synth = forward_synthesis(bundle.g_enc_b, bundle.g_enc_i, bundle.g_dec_i,
                                   b_cond, i_a);

    // --- discriminator step (fake detached) ---
    auto real_maps = forward_discriminators(bundle.d, i_b, b_cond);
    auto fake_maps_d = forward_discriminators(bundle.d, synth.i_hat.detach(), b_cond);
    auto adv_d = losses::adversarial_losses(real_maps, fake_maps_d);
    check_finite_or_abort(adv_d.d_loss, steps, opts.out_dir, "train_synthesis_stage[d]");
    nn::backward(adv_d.d_loss);
    adam_d.step();
    adam_d.zero_grad();

    // --- generator step ---
    auto fake_maps_g = forward_discriminators(bundle.d, synth.i_hat, b_cond);
    auto real_maps_g = forward_discriminators(bundle.d, i_b, b_cond);
    auto adv_g = losses::adversarial_losses(real_maps_g, fake_maps_g);
    auto f_p_ref = bundle.proxy(i_a).pool;
    auto thr = losses::feature_threshold_loss(synth.f_i, f_p_ref.detach(),
                                              opts.weights.margin_m);
    auto pixmul = losses::multiscale_pixel_loss(synth.i_hat, i_b);
    auto feat_hat = bundle.d_ip(synth.i_hat);
    auto feat_ref = bundle.d_ip(i_b);
    auto ip = losses::identity_preserving_loss(feat_hat.pool, feat_hat.fc, feat_ref.pool,
                                               feat_ref.fc);
    auto g_total = losses::stage2_total(adv_g.g_loss, thr, pixmul, ip, opts.weights);
    check_finite_or_abort(g_total, steps, opts.out_dir, "train_synthesis_stage[g]");
    nn::backward(g_total);
    adam_g.step();
    adam_g.zero_grad();

    res.final_pixmul = static_cast<double>(pixmul.value()[0]);
    res.final_thr = static_cast<double>(thr.value()[0]);
    res.final_ip = static_cast<double>(ip.value()[0]);
    res.final_g_adv = static_cast<double>(adv_g.g_loss.value()[0]);
    res.final_g_total = static_cast<double>(g_total.value()[0]);
    res.final_d_loss = static_cast<double>(adv_d.d_loss.value()[0]);

    if (opts.log_interval > 0 && steps % opts.log_interval == 0) {
      log.log(steps, "d_loss", res.final_d_loss);
      log.log(steps, "g_adv", res.final_g_adv);
      log.log(steps, "thr", res.final_thr);
      log.log(steps, "pix_mul", res.final_pixmul);
      log.log(steps, "ip", res.final_ip);
      log.log(steps, "stage2_total", res.final_g_total);
    }
    if ((steps + 1) % opts.checkpoint_interval == 0) {
      double d2 = stage2_detail::heldout_feature_distance(bundle, held);
      res.heldout_feat_sqdist.push_back(d2);
      log.log(steps + 1, "heldout_feat_sqdist", d2);
      if (!opts.out_dir.empty()) save(steps + 1);
    }
    if (opts.stop_at_pixmul && res.final_pixmul < *opts.stop_at_pixmul) {
      ++steps;
      break;
    }
  }

  res.steps_run = steps;
  res.d_steps = adam_d.step_count();
  res.g_steps = adam_g.step_count();
  if ((steps % opts.checkpoint_interval) != 0 || res.heldout_feat_sqdist.size() == 1) {
    double d2 = stage2_detail::heldout_feature_distance(bundle, held);
    res.heldout_feat_sqdist.push_back(d2);
    log.log(steps, "heldout_feat_sqdist", d2);
  }
  if (!opts.out_dir.empty()) res.checkpoint_path = save(steps);
  log.flush();
  return res;
}

// ---- inference ---------------------------------------------------------------

template <class S>
FaceImage synthesize_face(const NetworkBundle<S>& bundle, const FaceImage& i_a,
                          const BoundaryImage& b_hat) {
  std::vector<const FaceImage*> fp = {&i_a};
  std::vector<const BoundaryImage*> bp = {&b_hat};
  auto i = nn::Var<S>::constant(to_batch<S>(fp));
  auto b = nn::Var<S>::constant(to_batch<S>(bp));
  auto out = forward_synthesis(bundle.g_enc_b, bundle.g_enc_i, bundle.g_dec_i, b, i);
  const auto& t = out.i_hat.value();
  FaceImage img(i_a.height, i_a.width);
  for (std::size_t k = 0; k < img.chw.size(); ++k) img.chw[k] = static_cast<float>(t[k]);
  return img;
}

// Full manipulation path: rasterize -> predict boundary -> synthesize.
template <class S>
FaceImage manipulate(const NetworkBundle<S>& bundle, const FaceImage& i_a,
                     const LandmarkSet& lms_a, const PoseVector& p_b,
                     const ExpressionVector& e_b) {
  BoundaryImage b_a = rasterize_boundary(lms_a, i_a.height, i_a.width);
  BoundaryImage b_hat = predict_boundary(bundle, b_a, p_b, e_b);
  return synthesize_face(bundle, i_a, b_hat);
}

}  // namespace facemanip
