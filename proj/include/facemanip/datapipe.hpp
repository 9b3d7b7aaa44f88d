#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "facemanip/geometry.hpp"
#include "facemanip/imageio.hpp"
#include "facemanip/models.hpp"
#include "facemanip/synthetic.hpp"

namespace facemanip {

enum class Split { train, val, test };

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("invalid split label: " + s);
}

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

struct ManifestRecord {
  std::string image_path;      // resolved absolute path
  std::string landmarks_path;  // resolved absolute path
  std::string identity;
  double yaw_deg = 0.0;
  std::string expression_label;
  std::optional<std::array<double, kNumActionUnits>> au;  // normalized [0,1]
  std::string illumination;
  Split split = Split::train;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::map<Split, std::size_t> counts;
};

// Fallback AU vectors keyed by expression label, used when a record carries no
// per-image AU row. Index order matches the OpenFace 17-AU intensity set.
inline const std::map<std::string, std::array<double, kNumActionUnits>>&
au_label_table() {
  static const auto table = [] {
    std::map<std::string, std::array<double, kNumActionUnits>> t;
    std::array<double, kNumActionUnits> z{};
    t["neutral"] = z;
    auto mk = [&](std::initializer_list<std::pair<int, double>> entries) {
      std::array<double, kNumActionUnits> v{};
      for (auto [idx, val] : entries) v[idx] = val;
      return v;
    };
    t["smile"] = mk({{4, 0.6}, {8, 0.7}});                    // AU6 + AU12
    t["surprise"] = mk({{0, 0.7}, {1, 0.7}, {3, 0.5}, {14, 0.6}, {15, 0.5}});
    t["mouth_open"] = mk({{14, 0.8}, {15, 0.6}});             // AU25 + AU26
    t["brow_raise"] = mk({{0, 0.8}, {1, 0.8}});               // AU1 + AU2
    t["eye_close"] = mk({{16, 0.9}});                         // AU45
    t["scream"] = mk({{0, 0.8}, {1, 0.8}, {14, 1.0}, {15, 0.9}});
    return t;
  }();
  return table;
}

inline ExpressionVector expression_from_record(const ManifestRecord& rec) {
  ExpressionVector e;
  if (rec.au) {
    for (int i = 0; i < kNumActionUnits; ++i) e.v[i] = (*rec.au)[i];
    return e;
  }
  auto it = au_label_table().find(rec.expression_label);
  if (it == au_label_table().end())
    throw DataError("no AU vector and unknown expression label '" + rec.expression_label +
                    "' (known: neutral, smile, surprise, mouth_open, brow_raise, "
                    "eye_close, scream)");
  for (int i = 0; i < kNumActionUnits; ++i) e.v[i] = it->second[i];
  return e;
}

// JSON Lines manifest loader. Duplicate image paths and unresolvable files are
// rejected with the offending line number.
inline Manifest load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  fs::path base = fs::path(path).parent_path();

  Manifest out;
  out.counts = {{Split::train, 0}, {Split::val, 0}, {Split::test, 0}};
  std::set<std::string> seen_images;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto where = [&] { return path + ":" + std::to_string(lineno) + ": "; };
    try {
      ManifestRecord rec;
      auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        if (fp.is_relative()) fp = base / fp;
        return fp.string();
      };
      rec.image_path = resolve(j.at("image_path").get<std::string>());
      rec.landmarks_path = resolve(j.at("landmarks_path").get<std::string>());
      rec.identity = j.at("identity").get<std::string>();
      rec.yaw_deg = j.at("yaw_deg").get<double>();
      rec.expression_label = j.at("expression_label").get<std::string>();
      rec.illumination = j.at("illumination").get<std::string>();
      rec.split = split_from_string(j.at("split").get<std::string>());
      if (j.contains("au") && !j.at("au").is_null()) {
        auto arr = j.at("au");
        if (!arr.is_array() || arr.size() != kNumActionUnits)
          throw DataError("au must be an array of 17 numbers");
        std::array<double, kNumActionUnits> au{};
        for (int i = 0; i < kNumActionUnits; ++i) au[i] = arr[i].get<double>();
        rec.au = au;
      }
      if (!(rec.yaw_deg >= -90.0 && rec.yaw_deg <= 90.0))
        throw DataError("yaw_deg outside [-90, 90]");
      if (!seen_images.insert(rec.image_path).second)
        throw DataError("duplicate image_path: " + rec.image_path);
      if (!fs::exists(rec.image_path))
        throw DataError("image file not found: " + rec.image_path);
      if (!fs::exists(rec.landmarks_path))
        throw DataError("landmark file not found: " + rec.landmarks_path);
      out.counts[rec.split]++;
      out.records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where() + e.what());
    } catch (const DataError& e) {
      throw DataError(where() + e.what());
    }
  }
  return out;
}

// Decodes an 8-bit PNG/JPEG, resizes bilinearly to the working resolution and
// maps [0,255] -> [-1,1].
inline FaceImage decode_and_normalize(const std::string& path, int resolution) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image: " + path);
  if (bgr.rows != resolution || bgr.cols != resolution) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(resolution, resolution), 0, 0, cv::INTER_LINEAR);
    bgr = resized;
  }
  FaceImage img(resolution, resolution);
  for (int y = 0; y < resolution; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < resolution; ++x) {
      img.at(0, y, x) = static_cast<float>(row[x][2]) / 127.5f - 1.0f;  // R
      img.at(1, y, x) = static_cast<float>(row[x][1]) / 127.5f - 1.0f;  // G
      img.at(2, y, x) = static_cast<float>(row[x][0]) / 127.5f - 1.0f;  // B
    }
  }
  return img;
}

// ---- pair sampling -----------------------------------------------------------

struct PairPolicy {
  // Reject pairs whose pose and expression are both identical.
  bool require_distinct_condition = true;
};

// Samples ordered same-identity, same-illumination pairs. Identities with a
// single in-group record are skipped (counted in skipped_groups).
class PairSampler {
 public:
  template <class Rec>
  PairSampler(const std::vector<Rec>& records, const PairPolicy& policy,
              std::function<std::string(const Rec&)> group_key,
              std::function<std::string(const Rec&)> condition_key)
      : policy_(policy) {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i)
      groups[group_key(records[i])].push_back(i);
    for (auto& [key, idx] : groups) {
      if (idx.size() < 2) {
        ++skipped_groups_;
        continue;
      }
      groups_.push_back(idx);
    }
    for (std::size_t i = 0; i < records.size(); ++i)
      conditions_.push_back(condition_key(records[i]));
    if (groups_.empty())
      throw DataError("pair sampling requires at least one identity with >= 2 records");
  }

  std::pair<std::size_t, std::size_t> next(Rng& rng) const {
    for (int attempt = 0; attempt < 256; ++attempt) {
      const auto& g = groups_[rng.index(groups_.size())];
      std::size_t a = g[rng.index(g.size())];
      std::size_t b = g[rng.index(g.size())];
      if (a == b) continue;
      if (policy_.require_distinct_condition && conditions_[a] == conditions_[b]) continue;
      return {a, b};
    }
    throw DataError("pair sampling failed: no group offers a distinct-condition pair");
  }

  int skipped_groups() const { return skipped_groups_; }

 private:
  PairPolicy policy_;
  std::vector<std::vector<std::size_t>> groups_;
  std::vector<std::string> conditions_;
  int skipped_groups_ = 0;
};

// ---- materialized training data ----------------------------------------------

// One record with all modalities loaded: boundary raster, face raster, pose
// and expression vectors.
struct TrainingExample {
  BoundaryImage boundary;
  FaceImage face;
  PoseVector pose;
  ExpressionVector expr;
  std::string identity;
  std::string illumination;
  double yaw_deg = 0.0;
  Split split = Split::train;
};

inline std::string condition_key(const TrainingExample& ex) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.6f|%.6f|%.6f|", ex.pose.v[0], ex.pose.v[1],
                ex.pose.v[2]);
  std::string s(buf);
  for (double v : ex.expr.v) {
    std::snprintf(buf, sizeof(buf), "%.4f,", v);
    s += buf;
  }
  return s;
}

inline std::string pair_group_key(const TrainingExample& ex) {
  return ex.identity + "|" + ex.illumination;
}

inline LandmarkSet landmarks_for_record(const ManifestRecord& rec) {
  auto raw = read_landmark_file(rec.landmarks_path);
  cv::Mat probe = cv::imread(rec.image_path, cv::IMREAD_COLOR);
  if (probe.empty()) throw DataError("cannot decode image: " + rec.image_path);
  CropRect crop{0.0, 0.0, static_cast<double>(probe.cols), static_cast<double>(probe.rows)};
  return normalize_landmarks(raw, crop).landmarks;
}

inline std::vector<TrainingExample> materialize_manifest(const Manifest& manifest,
                                                         int resolution) {
  std::vector<TrainingExample> out;
  out.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    TrainingExample ex;
    LandmarkSet lms = landmarks_for_record(rec);
    ex.boundary = rasterize_boundary(lms, resolution, resolution);
    ex.face = decode_and_normalize(rec.image_path, resolution);
    ex.pose = pose_from_landmarks(lms);
    ex.expr = expression_from_record(rec);
    ex.identity = rec.identity;
    ex.illumination = rec.illumination;
    ex.yaw_deg = rec.yaw_deg;
    ex.split = rec.split;
    out.push_back(std::move(ex));
  }
  return out;
}

// In-memory materialization of synthetic samples (no files involved).
inline std::vector<TrainingExample> materialize_synthetic(
    const std::vector<SyntheticSample>& samples, int resolution, std::uint64_t style_seed,
    const std::string& illumination = "even") {
  std::vector<TrainingExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    TrainingExample ex;
    ex.boundary = rasterize_boundary(s.landmarks, resolution, resolution);
    ex.face = render_cartoon_face(s.landmarks, identity_style(s.identity, style_seed),
                                  resolution, resolution);
    ex.pose = s.pose;
    ex.expr = s.expr;
    ex.identity = "id" + std::to_string(s.identity);
    ex.illumination = illumination;
    ex.yaw_deg = s.pose.v[0] * 90.0;
    out.push_back(std::move(ex));
  }
  return out;
}

// ---- fixture dataset on disk ---------------------------------------------------

struct FixtureOptions {
  std::string out_dir;
  int n_identities = 8;
  int per_identity = 20;
  int resolution = 32;
  std::uint64_t seed = 0;
  std::vector<std::string> illuminations = {"even", "dim"};
  SyntheticTemplateSpec template_spec;  // seed/n_identities overridden below
};

inline double illumination_scale(const std::string& label) {
  if (label == "even") return 1.0;
  if (label == "dim") return 0.8;
  if (label == "warm") return 0.9;
  throw DataError("unknown illumination label: " + label);
}

// Writes images/, landmarks/ and manifest.jsonl under out_dir. Per identity,
// records rotate through the illumination list and split train/val/test
// 70/15/15.
inline std::string write_fixture_dataset(const FixtureOptions& opts) {
  namespace fs = std::filesystem;
  SyntheticTemplateSpec spec = opts.template_spec;
  spec.seed = opts.seed;
  spec.n_identities = opts.n_identities;
  SyntheticGenerator gen(spec);
  Rng rng(mix_seed(opts.seed) ^ 0xfeedfaceull);

  fs::create_directories(fs::path(opts.out_dir) / "images");
  fs::create_directories(fs::path(opts.out_dir) / "landmarks");
  std::string manifest_path = (fs::path(opts.out_dir) / "manifest.jsonl").string();
  std::ofstream mf(manifest_path, std::ios::trunc);
  if (!mf) throw DataError("cannot write manifest: " + manifest_path);

  int w = opts.resolution;
  for (int id = 0; id < opts.n_identities; ++id) {
    IdentityStyle style = identity_style(id, opts.seed);
    for (int k = 0; k < opts.per_identity; ++k) {
      SyntheticSample s = gen.sample(rng, id);
      const std::string illum = opts.illuminations[k % opts.illuminations.size()];
      char stem[64];
      std::snprintf(stem, sizeof(stem), "id%02d_%03d", id, k);
      std::string img_rel = std::string("images/") + stem + ".png";
      std::string lmk_rel = std::string("landmarks/") + stem + ".txt";

      FaceImage face =
          render_cartoon_face(s.landmarks, style, w, w, illumination_scale(illum));
      write_face_png((fs::path(opts.out_dir) / img_rel).string(), face);

      std::vector<Point2d> px;
      for (const auto& p : s.landmarks.pts) px.push_back({p.x * w, p.y * w});
      write_landmark_file((fs::path(opts.out_dir) / lmk_rel).string(), px);

      double frac = opts.per_identity > 1
                        ? static_cast<double>(k) / opts.per_identity
                        : 0.0;
      const char* split = frac < 0.7 ? "train" : (frac < 0.85 ? "val" : "test");

      int arg = 0;
      for (int i = 1; i < kNumActionUnits; ++i)
        if (s.expr.v[i] > s.expr.v[arg]) arg = i;
      std::string label = "neutral";
      if (s.expr.v[arg] > 0.15) {
        label = arg == kAuMouthOpen ? "mouth_open"
                : arg == kAuBrowRaise ? "brow_raise"
                : arg == kAuEyeClose ? "eye_close"
                                     : "mixed";
      }

      nlohmann::json j;
      j["image_path"] = img_rel;
      j["landmarks_path"] = lmk_rel;
      j["identity"] = "id" + std::to_string(id);
      j["yaw_deg"] = s.pose.v[0] * 90.0;
      j["expression_label"] = label;
      j["au"] = std::vector<double>(s.expr.v.begin(), s.expr.v.end());
      j["illumination"] = illum;
      j["split"] = split;
      mf << j.dump() << "\n";
    }
  }
  return manifest_path;
}

}  // namespace facemanip
