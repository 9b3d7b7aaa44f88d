#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "facemanip/train_common.hpp"

namespace facemanip {

// Per-dimension sampling ranges for the random conditions of the
// semi-supervised regression term, estimated from the training set.
struct ConditionRanges {
  std::array<std::pair<double, double>, kPoseDim> pose;
  std::array<std::pair<double, double>, kNumActionUnits> expr;

  static ConditionRanges from_examples(const std::vector<TrainingExample>& ex) {
    require(!ex.empty(), "ConditionRanges: empty dataset");
    ConditionRanges r;
    for (int j = 0; j < kPoseDim; ++j)
      r.pose[j] = {std::numeric_limits<double>::infinity(),
                   -std::numeric_limits<double>::infinity()};
    for (int j = 0; j < kNumActionUnits; ++j)
      r.expr[j] = {std::numeric_limits<double>::infinity(),
                   -std::numeric_limits<double>::infinity()};
    for (const auto& e : ex) {
      for (int j = 0; j < kPoseDim; ++j) {
        r.pose[j].first = std::min(r.pose[j].first, e.pose.v[j]);
        r.pose[j].second = std::max(r.pose[j].second, e.pose.v[j]);
      }
      for (int j = 0; j < kNumActionUnits; ++j) {
        r.expr[j].first = std::min(r.expr[j].first, e.expr.v[j]);
        r.expr[j].second = std::max(r.expr[j].second, e.expr.v[j]);
      }
    }
    r.validate();
    return r;
  }

  void validate() const {
    for (const auto& [lo, hi] : pose)
      if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw DataError("invalid pose condition range");
    for (const auto& [lo, hi] : expr)
      if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw DataError("invalid expression condition range");
  }
};

// Uniform draw per dimension; degenerate ranges yield constants.
inline std::pair<PoseVector, ExpressionVector> sample_conditions(
    Rng& rng, const ConditionRanges& ranges) {
  PoseVector p;
  ExpressionVector e;
  for (int j = 0; j < kPoseDim; ++j) {
    auto [lo, hi] = ranges.pose[j];
    p.v[j] = lo == hi ? lo : rng.uniform(lo, hi);
  }
  for (int j = 0; j < kNumActionUnits; ++j) {
    auto [lo, hi] = ranges.expr[j];
    e.v[j] = lo == hi ? lo : rng.uniform(lo, hi);
  }
  return {p, e};
}

// ---- estimator pre-training --------------------------------------------------

struct EstimatorTrainOptions {
  int max_steps = 5000;
  int batch_size = 16;
  int eval_interval = 250;
  int plateau_patience = 5;
  int log_interval = 10;
  double lr = 2e-4, beta1 = 0.9, beta2 = 0.999;
  std::optional<double> stop_at_mae;  // stop once every tracked MAE is below
  std::string out_dir;                // empty: keep everything in memory
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct EstimatorTrainResult {
  std::string checkpoint_path;
  double final_train_mse = 0.0;
  double final_val_mse = 0.0;
  std::array<double, kPoseDim> val_pose_mae{};
  double val_expr_mae = 0.0;
  int steps_run = 0;
};

namespace stage1_detail {

template <class S>
struct EstimatorEval {
  double mse;
  std::array<double, kPoseDim> pose_mae;
  double expr_mae;
};

template <class S>
EstimatorEval<S> eval_estimators(NetworkBundle<S>& bundle,
                                 const std::vector<TrainingExample>& data,
                                 int batch_size) {
  require(!data.empty(), "estimator eval: empty dataset");
  double se = 0.0, ae_expr = 0.0;
  std::array<double, kPoseDim> ae_pose{};
  std::size_t n_pose = 0, n_expr = 0;
  for (std::size_t off = 0; off < data.size(); off += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = off; i < std::min(data.size(), off + batch_size); ++i)
      idx.push_back(i);
    auto b = nn::Var<S>::constant(gather_boundaries<S>(data, idx));
    auto p_ref = gather_poses<S>(data, idx);
    auto e_ref = gather_exprs<S>(data, idx);
    auto out = forward_estimators(bundle.f_p, bundle.f_e, b);
    const auto& pv = out.pose.value();
    const auto& ev = out.expr.value();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int j = 0; j < kPoseDim; ++j) {
        double d = static_cast<double>(pv.at(i, j)) - static_cast<double>(p_ref.at(i, j));
        se += d * d / kPoseDim;
        ae_pose[j] += std::abs(d);
      }
      for (int j = 0; j < kExprDim; ++j) {
        double d = static_cast<double>(ev.at(i, j)) - static_cast<double>(e_ref.at(i, j));
        se += d * d / kExprDim;
        ae_expr += std::abs(d);
      }
      ++n_pose;
      n_expr += kExprDim;
    }
  }
  EstimatorEval<S> r;
  r.mse = se / static_cast<double>(n_pose);
  for (int j = 0; j < kPoseDim; ++j) r.pose_mae[j] = ae_pose[j] / static_cast<double>(n_pose);
  r.expr_mae = ae_expr / static_cast<double>(n_expr);
  return r;
}

}  // namespace stage1_detail

// Squared-error regression of F_p and F_e on (boundary, pose, expression)
// triples; stops on the MAE target, a validation plateau, or max_steps.
template <class S>
EstimatorTrainResult pretrain_estimators(NetworkBundle<S>& bundle,
                                         const std::vector<TrainingExample>& train,
                                         const std::vector<TrainingExample>& val,
                                         const EstimatorTrainOptions& opts) {
  if (train.empty()) throw DataError("pretrain_estimators: empty training set");
  nn::ParamList<S> params = bundle.params_estimators();
  nn::set_trainable(params, true);
  nn::Adam<S> adam(params, opts.lr, opts.beta1, opts.beta2);
  LossLog log(opts.out_dir);
  BatchStream batches(train.size(), opts.batch_size, Rng(mix_seed(opts.seed) ^ 0x51a9e1));

  const std::vector<TrainingExample>& eval_set = val.empty() ? train : val;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  double train_mse = 0.0;
  int steps = 0;
  for (; steps < opts.max_steps; ++steps) {
    auto idx = batches.next();
    auto b = nn::Var<S>::constant(gather_boundaries<S>(train, idx));
    auto p_ref = nn::Var<S>::constant(gather_poses<S>(train, idx));
    auto e_ref = nn::Var<S>::constant(gather_exprs<S>(train, idx));
    auto out = forward_estimators(bundle.f_p, bundle.f_e, b);
    auto loss = losses::conditional_regression_loss(out.pose, p_ref, out.expr, e_ref);
    check_finite_or_abort(loss, steps, opts.out_dir, "pretrain_estimators");
    train_mse = static_cast<double>(loss.value()[0]);
    nn::backward(loss);
    adam.step();
    adam.zero_grad();
    if (opts.log_interval > 0 && steps % opts.log_interval == 0)
      log.log(steps, "estimator_mse", train_mse);

    bool at_eval = (steps + 1) % opts.eval_interval == 0 || steps + 1 == opts.max_steps;
    if (at_eval) {
      auto ev = stage1_detail::eval_estimators(bundle, eval_set, opts.batch_size);
      log.log(steps + 1, "estimator_val_mse", ev.mse);
      if (ev.mse < best_val - 1e-9) {
        best_val = ev.mse;
        since_best = 0;
      } else if (++since_best >= opts.plateau_patience) {
        ++steps;
        break;
      }
      if (opts.stop_at_mae) {
        double worst = ev.expr_mae;
        for (double m : ev.pose_mae) worst = std::max(worst, m);
        if (worst < *opts.stop_at_mae) {
          ++steps;
          break;
        }
      }
    }
  }

  auto ev = stage1_detail::eval_estimators(bundle, eval_set, opts.batch_size);
  EstimatorTrainResult res;
  res.final_train_mse = steps == 0 ? ev.mse : train_mse;
  res.final_val_mse = ev.mse;
  res.val_pose_mae = ev.pose_mae;
  res.val_expr_mae = ev.expr_mae;
  res.steps_run = steps;
  if (!opts.out_dir.empty()) {
    nlohmann::json extra;
    extra["train_mse"] = res.final_train_mse;
    extra["val_mse"] = res.final_val_mse;
    extra["val_pose_mae"] = res.val_pose_mae;
    extra["val_expr_mae"] = res.val_expr_mae;
    CheckpointMeta meta;
    meta.stage = Stage::estimators;
    meta.step = static_cast<std::uint64_t>(steps);
    meta.config_hash = opts.config_hash ? opts.config_hash : bundle.cfg.hash();
    meta.extra = extra.dump();
    res.checkpoint_path =
        (std::filesystem::path(opts.out_dir) / "estimators.fmck").string();
    save_checkpoint(res.checkpoint_path, meta, params);
  }
  log.flush();
  return res;
}

// ---- conditional boundary training --------------------------------------------

struct Stage1TrainOptions {
  int max_steps = 20000;
  int batch_size = 8;
  int checkpoint_interval = 500;
  int log_interval = 10;
  double lr = 2e-4, beta1 = 0.9, beta2 = 0.999;
  LossWeights weights;
  std::optional<double> stop_at_pix;  // early stop on the supervised L1
  // Track mean |F_p(Dec(z, p_r, e_r)) - p_r| over a fixed probe set at
  // checkpoint cadence.
  int condition_probes = 100;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct Stage1TrainResult {
  std::string checkpoint_path;
  double final_pix = 0.0, final_reg = 0.0, final_total = 0.0;
  int steps_run = 0;
  std::vector<double> pix_history;            // sampled at checkpoint cadence
  std::vector<double> cond_pose_mae_history;  // index 0 is pre-training
};

// Semi-supervised boundary predictor training: Eq.(1) on supervised pairs and
// Eq.(2) on the same batch re-decoded under freshly sampled conditions, with
// the pre-trained estimators frozen. Optimizes Enc and Dec only.
template <class S>
Stage1TrainResult train_boundary_stage(NetworkBundle<S>& bundle,
                                       const std::vector<TrainingExample>& train,
                                       const Stage1TrainOptions& opts) {
  opts.weights.validate();
  if (train.empty()) throw DataError("train_boundary_stage: empty training set");
  nn::ParamList<S> est_params = bundle.params_estimators();
  nn::set_trainable(est_params, false);
  nn::ParamList<S> params = bundle.params_enc_dec();
  nn::set_trainable(params, true);
  nn::Adam<S> adam(params, opts.lr, opts.beta1, opts.beta2);
  LossLog log(opts.out_dir);

  ConditionRanges ranges = ConditionRanges::from_examples(train);
  PairSampler sampler(
      train, PairPolicy{},
      std::function<std::string(const TrainingExample&)>(pair_group_key),
      std::function<std::string(const TrainingExample&)>(condition_key));
  Rng pair_rng(mix_seed(opts.seed) ^ 0x7a11);
  Rng cond_rng(mix_seed(opts.seed) ^ 0xc09d);

  // Fixed probe set for the condition-fidelity trend metric.
  std::vector<std::size_t> probe_src;
  std::vector<PoseVector> probe_pose;
  std::vector<ExpressionVector> probe_expr;
  {
    Rng probe_rng(mix_seed(opts.seed) ^ 0xf1de);
    for (int i = 0; i < opts.condition_probes; ++i) {
      probe_src.push_back(probe_rng.index(train.size()));
      auto [p, e] = sample_conditions(probe_rng, ranges);
      probe_pose.push_back(p);
      probe_expr.push_back(e);
    }
  }
  auto condition_pose_mae = [&]() -> double {
    if (probe_src.empty()) return 0.0;
    double acc = 0.0;
    const std::size_t chunk = 16;
    for (std::size_t off = 0; off < probe_src.size(); off += chunk) {
      std::size_t hi = std::min(probe_src.size(), off + chunk);
      std::vector<std::size_t> idx(probe_src.begin() + off, probe_src.begin() + hi);
      std::vector<PoseVector> pr(probe_pose.begin() + off, probe_pose.begin() + hi);
      std::vector<ExpressionVector> er(probe_expr.begin() + off, probe_expr.begin() + hi);
      auto b_a = nn::Var<S>::constant(gather_boundaries<S>(train, idx));
      auto p_r = nn::Var<S>::constant(pose_batch<S>(pr));
      auto e_r = nn::Var<S>::constant(expr_batch<S>(er));
      auto fwd = forward_boundary_autoencoder(bundle.enc, bundle.dec, b_a, p_r, e_r);
      auto est = bundle.f_p(fwd.b_hat);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < kPoseDim; ++j)
          acc += std::abs(static_cast<double>(est.value().at(i, j)) - pr[i].v[j]);
    }
    return acc / (static_cast<double>(probe_src.size()) * kPoseDim);
  };

  Stage1TrainResult res;
  if (opts.condition_probes > 0)
    res.cond_pose_mae_history.push_back(condition_pose_mae());
  double pix = 0.0, reg = 0.0, total = 0.0;
  auto save = [&](int step, const std::string& name) {
    nlohmann::json extra;
    extra["pix"] = pix;
    extra["reg"] = reg;
    extra["total"] = total;
    CheckpointMeta meta;
    meta.stage = Stage::boundary;
    meta.step = static_cast<std::uint64_t>(step);
    meta.config_hash = opts.config_hash ? opts.config_hash : bundle.cfg.hash();
    meta.extra = extra.dump();
    std::string p = (std::filesystem::path(opts.out_dir) / name).string();
    save_checkpoint(p, meta, params);
    return p;
  };

  int steps = 0;
  for (; steps < opts.max_steps; ++steps) {
    std::vector<std::size_t> src_idx, tgt_idx;
    for (int i = 0; i < opts.batch_size; ++i) {
      auto [a, b] = sampler.next(pair_rng);
      src_idx.push_back(a);
      tgt_idx.push_back(b);
    }
    auto b_a = nn::Var<S>::constant(gather_boundaries<S>(train, src_idx));
    auto b_b = nn::Var<S>::constant(gather_boundaries<S>(train, tgt_idx));
    auto p_b = nn::Var<S>::constant(gather_poses<S>(train, tgt_idx));
    auto e_b = nn::Var<S>::constant(gather_exprs<S>(train, tgt_idx));

    auto fwd = forward_boundary_autoencoder(bundle.enc, bundle.dec, b_a, p_b, e_b);
    auto pix_loss = losses::pixel_boundary_loss(fwd.b_hat, b_b);

    std::vector<PoseVector> pr(opts.batch_size);
    std::vector<ExpressionVector> er(opts.batch_size);
    for (int i = 0; i < opts.batch_size; ++i)
      std::tie(pr[i], er[i]) = sample_conditions(cond_rng, ranges);
    auto p_r = nn::Var<S>::constant(pose_batch<S>(pr));
    auto e_r = nn::Var<S>::constant(expr_batch<S>(er));
    auto cond_r = nn::concat_cols<S>({fwd.z, p_r, e_r});
    auto b_r = bundle.dec(cond_r);
    auto est = forward_estimators(bundle.f_p, bundle.f_e, b_r);
    auto reg_loss = losses::conditional_regression_loss(est.pose, p_r, est.expr, e_r);

    auto total_loss = losses::stage1_total(pix_loss, reg_loss, opts.weights);
    check_finite_or_abort(total_loss, steps, opts.out_dir, "train_boundary_stage");
    pix = static_cast<double>(pix_loss.value()[0]);
    reg = static_cast<double>(reg_loss.value()[0]);
    total = static_cast<double>(total_loss.value()[0]);
    nn::backward(total_loss);
    adam.step();
    adam.zero_grad();

    if (opts.log_interval > 0 && steps % opts.log_interval == 0) {
      log.log(steps, "pix_bound", pix);
      log.log(steps, "reg", reg);
      log.log(steps, "stage1_total", total);
    }
    if ((steps + 1) % opts.checkpoint_interval == 0) {
      res.pix_history.push_back(pix);
      if (opts.condition_probes > 0) {
        double mae = condition_pose_mae();
        res.cond_pose_mae_history.push_back(mae);
        log.log(steps + 1, "cond_pose_mae", mae);
      }
      if (!opts.out_dir.empty()) save(steps + 1, "stage1.fmck");
    }
    if (opts.stop_at_pix && pix < *opts.stop_at_pix) {
      ++steps;
      break;
    }
  }

  res.final_pix = pix;
  res.final_reg = reg;
  res.final_total = total;
  res.steps_run = steps;
  res.pix_history.push_back(pix);
  if (opts.condition_probes > 0 && steps % opts.checkpoint_interval != 0)
    res.cond_pose_mae_history.push_back(condition_pose_mae());
  if (!opts.out_dir.empty()) res.checkpoint_path = save(steps, "stage1.fmck");
  log.flush();
  return res;
}

// Deterministic boundary prediction: z = Enc(B_a), raster = Dec(z, p_b, e_b).
template <class S>
BoundaryImage predict_boundary(const NetworkBundle<S>& bundle, const BoundaryImage& b_a,
                               const PoseVector& p_b, const ExpressionVector& e_b) {
  std::vector<const BoundaryImage*> ptr = {&b_a};
  auto b = nn::Var<S>::constant(to_batch<S>(ptr));
  auto p = nn::Var<S>::constant(pose_batch<S>({p_b}));
  auto e = nn::Var<S>::constant(expr_batch<S>({e_b}));
  auto fwd = forward_boundary_autoencoder(bundle.enc, bundle.dec, b, p, e);
  const auto& t = fwd.b_hat.value();
  BoundaryImage out(b_a.height, b_a.width);
  for (std::size_t i = 0; i < out.chw.size(); ++i) out.chw[i] = static_cast<float>(t[i]);
  return out;
}

}  // namespace facemanip
