#pragma once

// Small in-memory datasets shared by unit and acceptance tests.

#include "facemanip/facemanip.hpp"

namespace fixtures {

using namespace facemanip;

// n_ids x per_id materialized synthetic examples at the given resolution.
inline std::vector<TrainingExample> toy_dataset(int n_ids, int per_id, int resolution,
                                                std::uint64_t seed) {
  SyntheticTemplateSpec spec;
  spec.n_identities = n_ids;
  spec.seed = seed;
  auto samples = generate_synthetic_dataset(spec, n_ids * per_id);
  return materialize_synthetic(samples, resolution, seed);
}

// 4 identities x 2 records -> exactly 8 ordered same-identity pairs.
inline std::vector<TrainingExample> overfit_set(int resolution, std::uint64_t seed) {
  return toy_dataset(4, 2, resolution, seed);
}

inline nn::Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng,
                                        double lo = -1.0, double hi = 1.0) {
  nn::Tensor<double> t(std::move(shape));
  for (auto& v : t) v = rng.uniform(lo, hi);
  return t;
}

template <class S>
bool params_equal(const nn::ParamList<S>& a, const nn::ParamList<S>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ta = a[i].var.value();
    const auto& tb = b[i].var.value();
    if (!ta.same_shape(tb)) return false;
    for (std::size_t j = 0; j < ta.numel(); ++j)
      if (ta[j] != tb[j]) return false;
  }
  return true;
}

template <class S>
std::vector<nn::Tensor<S>> snapshot(const nn::ParamList<S>& params) {
  std::vector<nn::Tensor<S>> out;
  for (const auto& p : params) out.push_back(p.var.value());
  return out;
}

template <class S>
bool matches_snapshot(const nn::ParamList<S>& params,
                      const std::vector<nn::Tensor<S>>& snap) {
  if (params.size() != snap.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params[i].var.value();
    if (!t.same_shape(snap[i])) return false;
    for (std::size_t j = 0; j < t.numel(); ++j)
      if (t[j] != snap[i][j]) return false;
  }
  return true;
}

}  // namespace fixtures
