#include <catch2/catch_amalgamated.hpp>

#include "facemanip/facemanip.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace facemanip;
using Catch::Approx;

namespace {

FeatureSet gaussian_set(int n, int d, double mu, double sigma, std::uint64_t seed) {
  FeatureSet fs;
  Rng rng(seed);
  fs.feats.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) fs.feats(i, j) = rng.normal(mu, sigma);
  return fs;
}

}  // namespace

TEST_CASE("fid of a set against itself is ~0 and symmetric", "[evalsuite]") {
  FeatureSet a = gaussian_set(64, 8, 0.0, 1.0, 1);
  REQUIRE(evalsuite::fid(a, a) <= 1e-6);
  FeatureSet b = gaussian_set(64, 8, 0.5, 1.5, 2);
  double ab = evalsuite::fid(a, b);
  double ba = evalsuite::fid(b, a);
  REQUIRE(ab >= 0.0);
  REQUIRE(std::abs(ab - ba) <= 1e-6);
}

TEST_CASE("fid matches the closed-form 1-D Frechet distance", "[evalsuite]") {
  // modest n here; the acceptance suite runs the n=1e5 version
  FeatureSet a = gaussian_set(20000, 1, 0.0, 1.0, 3);
  FeatureSet b = gaussian_set(20000, 1, 1.0, 2.0, 4);
  double expect = oracles::frechet_1d(0.0, 1.0, 1.0, 2.0);
  REQUIRE(evalsuite::fid(a, b) == Approx(expect).margin(0.15));
}

TEST_CASE("fid grows with the mean shift at fixed covariance", "[evalsuite]") {
  FeatureSet base = gaussian_set(2000, 4, 0.0, 1.0, 5);
  double prev = -1.0;
  for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    FeatureSet moved = base;
    moved.feats.array() += shift;
    double v = evalsuite::fid(base, moved);
    REQUIRE(v > prev);
    prev = v;
  }
}

TEST_CASE("fid input contracts", "[evalsuite]") {
  FeatureSet a = gaussian_set(1, 4, 0, 1, 6);
  FeatureSet b = gaussian_set(16, 4, 0, 1, 7);
  REQUIRE_THROWS_AS(evalsuite::fid(a, b), ContractError);
  FeatureSet c = gaussian_set(16, 5, 0, 1, 8);
  REQUIRE_THROWS_AS(evalsuite::fid(b, c), ContractError);
  FeatureSet nan = gaussian_set(16, 4, 0, 1, 9);
  nan.feats(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(evalsuite::fid(b, nan), ContractError);
}

TEST_CASE("rank1: self-retrieval scores 100%", "[evalsuite]") {
  FeatureSet g = gaussian_set(10, 16, 0, 1, 10);
  for (int i = 0; i < 10; ++i) g.identities.push_back("id" + std::to_string(i));
  FeatureSet p = g;
  auto rep = evalsuite::rank1_accuracy(g, p);
  REQUIRE(rep.overall == 100.0);
  REQUIRE(rep.n_gallery == 10);
  REQUIRE(rep.n_probe == 10);
}

TEST_CASE("rank1: constructed orthogonal flip scores 0%", "[evalsuite]") {
  FeatureSet g;
  g.feats.resize(2, 2);
  g.feats << 1, 0, 0, 1;
  g.identities = {"a", "b"};
  FeatureSet p;
  p.feats.resize(1, 2);
  p.feats << 0, 1;      // equals gallery[1]
  p.identities = {"a"};  // but labeled as the other identity
  auto rep = evalsuite::rank1_accuracy(g, p);
  REQUIRE(rep.overall == 0.0);
}

TEST_CASE("rank1 is invariant to positive scaling and orthogonal rotation",
          "[evalsuite]") {
  Rng rng(33);
  FeatureSet g = gaussian_set(6, 8, 0, 1, 11);
  for (int i = 0; i < 6; ++i) g.identities.push_back("id" + std::to_string(i));
  FeatureSet p = gaussian_set(30, 8, 0, 1, 12);
  for (int i = 0; i < 30; ++i) p.identities.push_back("id" + std::to_string(i % 6));
  auto base = evalsuite::rank1_accuracy(g, p);

  FeatureSet gs = g, ps = p;
  gs.feats *= 3.7;
  ps.feats *= 3.7;
  REQUIRE(evalsuite::rank1_accuracy(gs, ps).overall == base.overall);

  // Householder reflection: orthogonal
  Eigen::VectorXd v(8);
  for (int i = 0; i < 8; ++i) v[i] = rng.normal();
  v.normalize();
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(8, 8) - 2.0 * v * v.transpose();
  FeatureSet gq = g, pq = p;
  gq.feats = g.feats * q;
  pq.feats = p.feats * q;
  REQUIRE(evalsuite::rank1_accuracy(gq, pq).overall == base.overall);
}

TEST_CASE("rank1 bucket accuracies aggregate exactly to the overall", "[evalsuite]") {
  FeatureSet g = gaussian_set(4, 8, 0, 1, 13);
  for (int i = 0; i < 4; ++i) g.identities.push_back("id" + std::to_string(i));
  FeatureSet p = gaussian_set(40, 8, 0, 1, 14);
  for (int i = 0; i < 40; ++i) {
    p.identities.push_back("id" + std::to_string(i % 4));
    p.pose_buckets.push_back(pose_bucket_label(15.0 * (i % 5)));
  }
  auto rep = evalsuite::rank1_accuracy(g, p);
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& [bucket, acc] : rep.buckets) {
    weighted += acc * static_cast<double>(rep.bucket_counts.at(bucket));
    total += rep.bucket_counts.at(bucket);
  }
  REQUIRE(total == rep.n_probe);
  REQUIRE(weighted / static_cast<double>(total) == Approx(rep.overall).epsilon(1e-12));
}

TEST_CASE("rank1 data contracts", "[evalsuite]") {
  FeatureSet g = gaussian_set(3, 4, 0, 1, 15);
  g.identities = {"a", "b", "a"};  // duplicate gallery identity
  FeatureSet p = gaussian_set(2, 4, 0, 1, 16);
  p.identities = {"a", "b"};
  REQUIRE_THROWS_AS(evalsuite::rank1_accuracy(g, p), DataError);

  g.identities = {"a", "b", "c"};
  p.identities = {"a", "zz"};  // probe identity missing from gallery
  REQUIRE_THROWS_AS(evalsuite::rank1_accuracy(g, p), DataError);
}

TEST_CASE("embed_images is deterministic with duplicate rows for duplicates",
          "[evalsuite]") {
  auto bundle = init_networks<float>(
      [] {
        ModelConfig c;
        c.resolution = 32;
        return c;
      }(),
      3);
  auto examples = fixtures::toy_dataset(2, 3, 32, 4);
  std::vector<FaceImage> imgs = {examples[0].face, examples[1].face, examples[0].face};
  FeatureSet fs = embed_images(bundle, imgs);
  REQUIRE(fs.feats.rows() == 3);
  REQUIRE(fs.feats.cols() == 64);
  FeatureSet again = embed_images(bundle, imgs);
  REQUIRE((fs.feats - again.feats).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((fs.feats.row(0) - fs.feats.row(2)).cwiseAbs().maxCoeff() == 0.0);

  std::vector<FaceImage> wrong = {FaceImage(16, 16)};
  REQUIRE_THROWS_AS(embed_images(bundle, wrong), ContractError);
}

TEST_CASE("pose buckets snap to 15-degree columns", "[evalsuite]") {
  REQUIRE(pose_bucket_label(0.0) == "+-0");
  REQUIRE(pose_bucket_label(-14.0) == "+-15");
  REQUIRE(pose_bucket_label(37.0) == "+-30");
  REQUIRE(pose_bucket_label(38.0) == "+-45");
  REQUIRE(pose_bucket_label(-90.0) == "+-90");
}
