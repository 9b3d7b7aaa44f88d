#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "facemanip/models.hpp"
#include "facemanip/train_common.hpp"

namespace facemanip {

// Embedding matrix with optional identity labels and pose buckets.
struct FeatureSet {
  Eigen::MatrixXd feats;  // n x d
  std::vector<std::string> identities;   // optional, for retrieval
  std::vector<std::string> pose_buckets; // optional, per-row bucket label
  std::string source;                    // "real" | "synthesized"

  std::size_t size() const { return static_cast<std::size_t>(feats.rows()); }
};

inline std::string pose_bucket_label(double yaw_deg) {
  int bucket = static_cast<int>(std::lround(std::abs(yaw_deg) / 15.0)) * 15;
  bucket = std::clamp(bucket, 0, 90);
  return "+-" + std::to_string(bucket);
}

namespace evalsuite {

inline constexpr double kCovarianceEps = 1e-6;
inline constexpr double kSqrtResidueTol = 1e-3;
inline constexpr double kFidNegativeTol = -1e-6;

namespace detail {

// Symmetric PSD square root via eigendecomposition; eigenvalues are clamped
// at zero and the clamped mass is reported as the imaginary residue.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double* residue) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalError("fid: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  double res = 0.0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < 0.0) {
      res += std::sqrt(-ev[i]);
      ev[i] = 0.0;
    }
  }
  if (residue) *residue += res;
  Eigen::VectorXd root = ev.array().sqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline Moments moments(const Eigen::MatrixXd& x) {
  Moments m;
  const auto n = x.rows();
  m.mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(n - 1);
  m.cov.diagonal().array() += kCovarianceEps;
  return m;
}

}  // namespace detail

// Frechet distance between Gaussian fits of the two embedding sets:
// ||mu_A - mu_B||^2 + Tr(S_A + S_B - 2 (S_A S_B)^{1/2}).
inline double fid(const FeatureSet& a, const FeatureSet& b) {
  if (a.size() < 2 || b.size() < 2)
    throw ContractError("fid: both feature sets need n >= 2");
  if (a.feats.cols() != b.feats.cols())
    throw ContractError("fid: feature dimension mismatch");
  if (!a.feats.allFinite() || !b.feats.allFinite())
    throw ContractError("fid: non-finite feature entries");

  detail::Moments ma = detail::moments(a.feats);
  detail::Moments mb = detail::moments(b.feats);

  double residue = 0.0;
  Eigen::MatrixXd sqrt_a = detail::psd_sqrt(ma.cov, &residue);
  Eigen::MatrixXd inner = sqrt_a * mb.cov * sqrt_a;
  Eigen::MatrixXd cross = detail::psd_sqrt(inner, &residue);
  if (residue > kSqrtResidueTol)
    throw NumericalError("fid: matrix square root residue " + std::to_string(residue) +
                         " exceeds tolerance");

  double mean_term = (ma.mean - mb.mean).squaredNorm();
  double trace_term = ma.cov.trace() + mb.cov.trace() - 2.0 * cross.trace();
  double value = mean_term + trace_term;
  if (value < kFidNegativeTol)
    throw NumericalError("fid: value " + std::to_string(value) +
                         " below the negative tolerance");
  return std::max(value, 0.0);
}

struct Rank1Report {
  double overall = 0.0;  // percentage
  std::map<std::string, double> buckets;
  std::map<std::string, std::size_t> bucket_counts;
  std::size_t n_gallery = 0, n_probe = 0;
};

// Rank-1 identification by maximum cosine similarity, ties resolved toward
// the lowest gallery index.
inline Rank1Report rank1_accuracy(const FeatureSet& gallery, const FeatureSet& probes) {
  if (gallery.size() == 0 || probes.size() == 0)
    throw ContractError("rank1_accuracy: empty gallery or probe set");
  if (gallery.feats.cols() != probes.feats.cols())
    throw ContractError("rank1_accuracy: feature dimension mismatch");
  if (gallery.identities.size() != gallery.size() ||
      probes.identities.size() != probes.size())
    throw ContractError("rank1_accuracy: identity labels required");

  std::map<std::string, std::size_t> gallery_ids;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    if (!gallery_ids.emplace(gallery.identities[i], i).second)
      throw DataError("rank1_accuracy: duplicate gallery identity " +
                      gallery.identities[i]);
  }
  for (const auto& id : probes.identities)
    if (!gallery_ids.count(id))
      throw DataError("rank1_accuracy: probe identity absent from gallery: " + id);

  auto normalized = [](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out = x;
    for (int i = 0; i < out.rows(); ++i) {
      double n = out.row(i).norm();
      if (n == 0.0) throw DataError("rank1_accuracy: zero-norm embedding row");
      out.row(i) /= n;
    }
    return out;
  };
  Eigen::MatrixXd g = normalized(gallery.feats);
  Eigen::MatrixXd p = normalized(probes.feats);
  Eigen::MatrixXd sim = p * g.transpose();  // n_probe x n_gallery

  Rank1Report rep;
  rep.n_gallery = gallery.size();
  rep.n_probe = probes.size();
  std::map<std::string, std::size_t> bucket_correct;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < gallery.size(); ++j)
      if (sim(i, j) > sim(i, arg)) arg = j;
    bool ok = gallery.identities[arg] == probes.identities[i];
    correct += ok;
    std::string bucket =
        probes.pose_buckets.size() == probes.size() ? probes.pose_buckets[i] : "all";
    rep.bucket_counts[bucket]++;
    if (ok) bucket_correct[bucket]++;
  }
  rep.overall = 100.0 * static_cast<double>(correct) / static_cast<double>(probes.size());
  for (const auto& [bucket, count] : rep.bucket_counts)
    rep.buckets[bucket] =
        100.0 * static_cast<double>(bucket_correct[bucket]) / static_cast<double>(count);
  return rep;
}

}  // namespace evalsuite

// Pooled Proxy embeddings of a list of face images, order-preserving.
template <class S>
FeatureSet embed_images(NetworkBundle<S>& bundle, const std::vector<FaceImage>& images,
                        int batch_size = 16) {
  require(!images.empty(), "embed_images: empty image list");
  FeatureSet fs;
  fs.feats.resize(static_cast<Eigen::Index>(images.size()), bundle.cfg.d_id);
  for (std::size_t off = 0; off < images.size(); off += batch_size) {
    std::vector<const FaceImage*> ptrs;
    for (std::size_t i = off; i < std::min(images.size(), off + batch_size); ++i) {
      require(images[i].height == bundle.cfg.resolution &&
                  images[i].width == bundle.cfg.resolution,
              "embed_images: image resolution does not match the proxy checkpoint");
      ptrs.push_back(&images[i]);
    }
    auto x = nn::Var<S>::constant(to_batch<S>(ptrs));
    auto feats = bundle.proxy(x);
    const auto& pool = feats.pool.value();
    for (std::size_t i = 0; i < ptrs.size(); ++i)
      for (int j = 0; j < bundle.cfg.d_id; ++j)
        fs.feats(static_cast<Eigen::Index>(off + i), j) =
            static_cast<double>(pool.at(i, j));
  }
  return fs;
}

}  // namespace facemanip
