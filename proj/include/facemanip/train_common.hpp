#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "facemanip/adam.hpp"
#include "facemanip/datapipe.hpp"
#include "facemanip/losses.hpp"

namespace facemanip {

// Append-only JSON Lines loss-curve writer: {step, loss_name, value}.
class LossLog {
 public:
  LossLog() = default;
  explicit LossLog(const std::string& out_dir) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    path_ = (std::filesystem::path(out_dir) / "losses.jsonl").string();
    os_.open(path_, std::ios::app);
    if (!os_) throw DataError("cannot open loss log: " + path_);
  }

  void log(std::uint64_t step, const std::string& name, double value) {
    if (!os_.is_open()) return;
    nlohmann::json j;
    j["step"] = step;
    j["loss_name"] = name;
    j["value"] = value;
    os_ << j.dump() << "\n";
  }
  void flush() {
    if (os_.is_open()) os_.flush();
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ofstream os_;
};

// Deterministic epoch-shuffled batch index stream.
class BatchStream {
 public:
  BatchStream(std::size_t n, int batch_size, Rng rng)
      : n_(n), batch_(batch_size), rng_(rng) {
    require(n_ > 0, "BatchStream: empty dataset");
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> idx;
    idx.reserve(batch_);
    for (int i = 0; i < batch_; ++i) {
      if (cursor_ == order_.size()) reshuffle();
      idx.push_back(order_[cursor_++]);
    }
    return idx;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    rng_.shuffle(order_.begin(), order_.end());
    cursor_ = 0;
  }

  std::size_t n_;
  int batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

template <class S>
void check_finite_or_abort(const nn::Var<S>& loss, std::uint64_t step,
                           const std::string& out_dir, const std::string& phase) {
  double v = static_cast<double>(loss.value()[0]);
  if (std::isfinite(v)) return;
  if (!out_dir.empty()) {
    nlohmann::json j;
    j["phase"] = phase;
    j["step"] = step;
    j["loss"] = "non-finite";
    std::ofstream os(std::filesystem::path(out_dir) / "nan_abort.json");
    os << j.dump(2) << "\n";
  }
  throw NumericalError(phase + ": non-finite loss at step " + std::to_string(step));
}

// Batch gather helpers over materialized examples.
template <class S>
nn::Tensor<S> gather_boundaries(const std::vector<TrainingExample>& ex,
                                const std::vector<std::size_t>& idx) {
  std::vector<const BoundaryImage*> ptrs;
  for (auto i : idx) ptrs.push_back(&ex[i].boundary);
  return to_batch<S>(ptrs);
}

template <class S>
nn::Tensor<S> gather_faces(const std::vector<TrainingExample>& ex,
                           const std::vector<std::size_t>& idx) {
  std::vector<const FaceImage*> ptrs;
  for (auto i : idx) ptrs.push_back(&ex[i].face);
  return to_batch<S>(ptrs);
}

template <class S>
nn::Tensor<S> gather_poses(const std::vector<TrainingExample>& ex,
                           const std::vector<std::size_t>& idx) {
  std::vector<PoseVector> v;
  for (auto i : idx) v.push_back(ex[i].pose);
  return pose_batch<S>(v);
}

template <class S>
nn::Tensor<S> gather_exprs(const std::vector<TrainingExample>& ex,
                           const std::vector<std::size_t>& idx) {
  std::vector<ExpressionVector> v;
  for (auto i : idx) v.push_back(ex[i].expr);
  return expr_batch<S>(v);
}

}  // namespace facemanip
