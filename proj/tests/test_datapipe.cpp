#include <catch2/catch_amalgamated.hpp>

#include "facemanip/facemanip.hpp"
#include "support/fixtures.hpp"

using namespace facemanip;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("empty manifest loads as an empty list", "[datapipe]") {
  auto dir = fresh_dir("fm_dp_empty");
  auto path = (dir / "manifest.jsonl").string();
  std::ofstream(path).close();
  Manifest m = load_manifest(path);
  REQUIRE(m.records.empty());
  REQUIRE(m.counts.at(Split::train) == 0);
}

TEST_CASE("fixture manifest round-trips with correct counts", "[datapipe]") {
  auto dir = fresh_dir("fm_dp_fixture");
  FixtureOptions opts;
  opts.out_dir = dir.string();
  opts.n_identities = 2;
  opts.per_identity = 10;
  opts.resolution = 32;
  opts.seed = 5;
  std::string manifest_path = write_fixture_dataset(opts);
  Manifest m = load_manifest(manifest_path);
  REQUIRE(m.records.size() == 20);
  REQUIRE(m.counts.at(Split::train) == 14);
  REQUIRE(m.counts.at(Split::val) == 4);
  REQUIRE(m.counts.at(Split::test) == 2);

  auto examples = materialize_manifest(m, 32);
  REQUIRE(examples.size() == 20);
  for (const auto& ex : examples) {
    REQUIRE(ex.boundary.height == 32);
    REQUIRE(ex.face.height == 32);
    for (float v : ex.face.chw) {
      REQUIRE(v >= -1.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("duplicate image paths are rejected with the line number", "[datapipe]") {
  auto dir = fresh_dir("fm_dp_dup");
  FixtureOptions opts;
  opts.out_dir = dir.string();
  opts.n_identities = 1;
  opts.per_identity = 2;
  opts.resolution = 32;
  std::string manifest_path = write_fixture_dataset(opts);
  std::ifstream in(manifest_path);
  std::string l1;
  std::getline(in, l1);
  std::ofstream(manifest_path, std::ios::app) << l1 << "\n";
  try {
    load_manifest(manifest_path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find(":3:") != std::string::npos);
    REQUIRE(std::string(e.what()).find("duplicate") != std::string::npos);
  }
}

TEST_CASE("malformed JSON names the offending line", "[datapipe]") {
  auto dir = fresh_dir("fm_dp_badjson");
  auto path = (dir / "m.jsonl").string();
  std::ofstream(path) << "{not json\n";
  try {
    load_manifest(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find(":1:") != std::string::npos);
  }
  REQUIRE_THROWS_AS(load_manifest((dir / "missing.jsonl").string()), DataError);
}

TEST_CASE("AU fallback table covers known labels and rejects unknown ones",
          "[datapipe]") {
  ManifestRecord rec;
  rec.expression_label = "smile";
  ExpressionVector e = expression_from_record(rec);
  REQUIRE(e.v[8] == Approx(0.7));  // AU12
  rec.expression_label = "grimace";
  REQUIRE_THROWS_AS(expression_from_record(rec), DataError);
  rec.au = std::array<double, 17>{};
  (*rec.au)[3] = 0.5;
  ExpressionVector e2 = expression_from_record(rec);
  REQUIRE(e2.v[3] == 0.5);
}

TEST_CASE("decode_and_normalize hits the affine endpoints", "[datapipe]") {
  auto dir = fresh_dir("fm_dp_decode");
  auto write_flat = [&](const std::string& name, unsigned char v) {
    std::vector<unsigned char> rgb(16 * 16 * 3, v);
    std::string p = (dir / name).string();
    write_png_rgb8(p, 16, 16, rgb);
    return p;
  };
  FaceImage gray = decode_and_normalize(write_flat("gray.png", 128), 16);
  for (float v : gray.chw) REQUIRE(v == Approx(128.0 / 127.5 - 1.0).margin(1e-6));
  FaceImage black = decode_and_normalize(write_flat("black.png", 0), 16);
  for (float v : black.chw) REQUIRE(v == Approx(-1.0));
  FaceImage white = decode_and_normalize(write_flat("white.png", 255), 16);
  for (float v : white.chw) REQUIRE(v == Approx(1.0));
  REQUIRE_THROWS_AS(decode_and_normalize((dir / "nope.png").string(), 16), DataError);
  // resize path stays in range
  FaceImage resized = decode_and_normalize(write_flat("resize.png", 77), 32);
  REQUIRE(resized.height == 32);
  for (float v : resized.chw) {
    REQUIRE(v >= -1.0f);
    REQUIRE(v <= 1.0f);
  }
  // JPEG input is accepted too
  std::string jpg = (dir / "flat.jpg").string();
  cv::Mat flat(16, 16, CV_8UC3, cv::Scalar(90, 90, 90));
  REQUIRE(cv::imwrite(jpg, flat));
  FaceImage from_jpeg = decode_and_normalize(jpg, 16);
  for (float v : from_jpeg.chw)
    REQUIRE(v == Approx(90.0 / 127.5 - 1.0).margin(0.05));  // lossy codec slack
}

TEST_CASE("pair sampler: exhaustive two-record identity", "[datapipe]") {
  auto examples = fixtures::toy_dataset(1, 2, 32, 3);
  PairSampler sampler(
      examples, PairPolicy{},
      std::function<std::string(const TrainingExample&)>(pair_group_key),
      std::function<std::string(const TrainingExample&)>(condition_key));
  Rng rng(1);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (int i = 0; i < 200; ++i) seen.insert(sampler.next(rng));
  REQUIRE(seen == std::set<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 0}});
}

TEST_CASE("pair sampler is deterministic and never crosses identity or illumination",
          "[datapipe]") {
  auto dir = fresh_dir("fm_dp_pairs");
  FixtureOptions opts;
  opts.out_dir = dir.string();
  opts.n_identities = 4;
  opts.per_identity = 8;
  opts.resolution = 32;
  opts.seed = 9;
  Manifest m = load_manifest(write_fixture_dataset(opts));
  auto examples = materialize_manifest(m, 32);

  PairSampler sampler(
      examples, PairPolicy{},
      std::function<std::string(const TrainingExample&)>(pair_group_key),
      std::function<std::string(const TrainingExample&)>(condition_key));
  Rng r1(42), r2(42);
  for (int i = 0; i < 1000; ++i) {
    auto [a, b] = sampler.next(r1);
    auto [a2, b2] = sampler.next(r2);
    REQUIRE(a == a2);
    REQUIRE(b == b2);
    REQUIRE(a != b);
    REQUIRE(examples[a].identity == examples[b].identity);
    REQUIRE(examples[a].illumination == examples[b].illumination);
    REQUIRE(condition_key(examples[a]) != condition_key(examples[b]));
  }
}

TEST_CASE("identities with a single record are skipped with a warning count",
          "[datapipe]") {
  auto examples = fixtures::toy_dataset(2, 2, 32, 3);
  examples.pop_back();  // second identity now has one record
  PairSampler sampler(
      examples, PairPolicy{},
      std::function<std::string(const TrainingExample&)>(pair_group_key),
      std::function<std::string(const TrainingExample&)>(condition_key));
  REQUIRE(sampler.skipped_groups() == 1);
  Rng rng(0);
  for (int i = 0; i < 50; ++i) {
    auto [a, b] = sampler.next(rng);
    REQUIRE(examples[a].identity == "id0");
  }
}

TEST_CASE("synthetic generator: zero pose and AUs reproduce the base template",
          "[datapipe]") {
  SyntheticTemplateSpec spec;
  spec.seed = 11;
  SyntheticGenerator gen(spec);
  ExpressionVector zero;
  LandmarkSet placed = gen.place(0, 0.0, 0.0, 0.0, zero);
  for (int i = 0; i < kNumLandmarks; ++i) {
    REQUIRE(placed.pts[i].x == gen.base(0).pts[i].x);
    REQUIRE(placed.pts[i].y == gen.base(0).pts[i].y);
  }
  BoundaryImage a = rasterize_boundary(placed, 32, 32);
  BoundaryImage b = rasterize_boundary(gen.base(0), 32, 32);
  REQUIRE(a.chw == b.chw);
}

TEST_CASE("synthetic pose parameters are exactly recovered by the pose heuristic",
          "[datapipe]") {
  SyntheticTemplateSpec spec;
  spec.seed = 13;
  SyntheticGenerator gen(spec);
  Rng rng(29);
  for (int t = 0; t < 40; ++t) {
    double yaw = rng.uniform(-spec.yaw_range_deg, spec.yaw_range_deg);
    double pitch = rng.uniform(-spec.pitch_range_deg, spec.pitch_range_deg);
    double roll = rng.uniform(-spec.roll_range_deg, spec.roll_range_deg);
    ExpressionVector e;
    e.v[kAuMouthOpen] = rng.uniform(0, 1);
    e.v[kAuBrowRaise] = rng.uniform(0, 1);
    e.v[kAuEyeClose] = rng.uniform(0, 1);
    LandmarkSet lms = gen.place(t % spec.n_identities, yaw, pitch, roll, e);
    PoseVector p = pose_from_landmarks(lms);
    REQUIRE(p.yaw() * 90.0 == Approx(yaw).margin(0.02));
    REQUIRE(p.pitch() * 90.0 == Approx(pitch).margin(0.02));
    REQUIRE(p.roll() * 90.0 == Approx(roll).margin(0.02));
  }
}

TEST_CASE("synthetic dataset generation is seed-deterministic", "[datapipe]") {
  SyntheticTemplateSpec spec;
  spec.seed = 21;
  auto a = generate_synthetic_dataset(spec, 16);
  auto b = generate_synthetic_dataset(spec, 16);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].identity == b[i].identity);
    for (int j = 0; j < kNumLandmarks; ++j) {
      REQUIRE(a[i].landmarks.pts[j].x == b[i].landmarks.pts[j].x);
      REQUIRE(a[i].landmarks.pts[j].y == b[i].landmarks.pts[j].y);
    }
  }
}

TEST_CASE("displacement overflow raises a data error", "[datapipe]") {
  SyntheticTemplateSpec spec;
  spec.mouth_open = 5.0;  // way past the unit square
  SyntheticGenerator gen(spec);
  ExpressionVector e;
  e.v[kAuMouthOpen] = 1.0;
  REQUIRE_THROWS_AS(gen.place(0, 0, 0, 0, e), DataError);
}

TEST_CASE("cartoon rendering is deterministic and in range", "[datapipe]") {
  SyntheticTemplateSpec spec;
  SyntheticGenerator gen(spec);
  auto style = identity_style(3, 7);
  FaceImage a = render_cartoon_face(gen.base(3), style, 32, 32, 1.0);
  FaceImage b = render_cartoon_face(gen.base(3), style, 32, 32, 1.0);
  REQUIRE(a.chw == b.chw);
  for (float v : a.chw) {
    REQUIRE(v >= -1.0f);
    REQUIRE(v <= 1.0f);
  }
  FaceImage dim = render_cartoon_face(gen.base(3), style, 32, 32, 0.8);
  REQUIRE(dim.chw != a.chw);
}
