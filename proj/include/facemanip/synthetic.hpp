#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "facemanip/geometry.hpp"
#include "facemanip/models.hpp"
#include "facemanip/rng.hpp"

namespace facemanip {

// AU indices of the OpenFace 17-intensity set
// (AU1,2,4,5,6,7,9,10,12,14,15,17,20,23,25,26,45) this artifact's synthetic
// displacement fields drive.
inline constexpr int kAuBrowRaise = 0;   // AU1 inner brow raiser
inline constexpr int kAuMouthOpen = 14;  // AU25 lips part
inline constexpr int kAuEyeClose = 16;   // AU45 blink

// Neutral 68-point template on the unit square, bilaterally symmetric, with
// the nose tip exactly on the eye/mouth midline so the neutral pose reads as
// (0, 0, 0).
inline const std::array<Point2d, kNumLandmarks>& template_landmarks() {
  static const std::array<Point2d, kNumLandmarks> base = [] {
    std::array<Point2d, kNumLandmarks> p{};
    // jaw: ellipse arc, 175 deg down to 5 deg
    for (int i = 0; i <= 16; ++i) {
      double a = (175.0 - 10.625 * i) * M_PI / 180.0;
      p[i] = {0.5 + 0.32 * std::cos(a), 0.42 + 0.50 * std::sin(a)};
    }
    const double bx[5] = {0.26, 0.305, 0.35, 0.395, 0.44};
    const double by[5] = {0.345, 0.330, 0.325, 0.330, 0.345};
    for (int i = 0; i < 5; ++i) {
      p[17 + i] = {bx[i], by[i]};              // left brow
      p[22 + i] = {1.0 - bx[4 - i], by[4 - i]};  // right brow
    }
    p[27] = {0.5, 0.42};
    p[28] = {0.5, 0.475};
    p[29] = {0.5, 0.53};
    p[30] = {0.5, 0.58};  // nose tip on the eye/mouth midline
    const double nx[5] = {0.42, 0.46, 0.5, 0.54, 0.58};
    const double ny[5] = {0.635, 0.645, 0.65, 0.645, 0.635};
    for (int i = 0; i < 5; ++i) p[31 + i] = {nx[i], ny[i]};
    // eyes
    p[36] = {0.28, 0.42};
    p[37] = {0.325, 0.405};
    p[38] = {0.385, 0.405};
    p[39] = {0.43, 0.42};
    p[40] = {0.385, 0.435};
    p[41] = {0.325, 0.435};
    p[42] = {0.57, 0.42};
    p[43] = {0.615, 0.405};
    p[44] = {0.675, 0.405};
    p[45] = {0.72, 0.42};
    p[46] = {0.675, 0.435};
    p[47] = {0.615, 0.435};
    // outer lip
    p[48] = {0.36, 0.74};
    p[49] = {0.405, 0.715};
    p[50] = {0.455, 0.70};
    p[51] = {0.5, 0.705};
    p[52] = {0.545, 0.70};
    p[53] = {0.595, 0.715};
    p[54] = {0.64, 0.74};
    p[55] = {0.595, 0.765};
    p[56] = {0.545, 0.785};
    p[57] = {0.5, 0.79};
    p[58] = {0.455, 0.785};
    p[59] = {0.405, 0.765};
    // inner lip
    p[60] = {0.40, 0.74};
    p[61] = {0.455, 0.73};
    p[62] = {0.5, 0.733};
    p[63] = {0.545, 0.73};
    p[64] = {0.60, 0.74};
    p[65] = {0.545, 0.75};
    p[66] = {0.5, 0.753};
    p[67] = {0.455, 0.75};
    return p;
  }();
  return base;
}

// Points the pose heuristic reads; the generator never jitters or
// expression-displaces these, which is what makes generated pose labels
// exactly recoverable.
inline bool is_pose_anchor(int i) {
  return i == kNoseTip || i == kLeftEyeOuter || i == kLeftEyeInner ||
         i == kRightEyeInner || i == kRightEyeOuter || i == kMouthLeft ||
         i == kMouthRight;
}

struct SyntheticTemplateSpec {
  int n_identities = 8;
  double yaw_range_deg = 40.0;
  double pitch_range_deg = 25.0;
  double roll_range_deg = 25.0;
  // AU displacement field magnitudes (unit-square units at intensity 1)
  double mouth_open = 0.10;
  double brow_raise = 0.05;
  double eye_close = 0.012;
  double identity_jitter = 0.006;
  std::uint64_t seed = 0;
};

struct SyntheticSample {
  LandmarkSet landmarks;
  PoseVector pose;        // generating parameters, not estimates
  ExpressionVector expr;  // generating parameters
  int identity = 0;
};

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(const SyntheticTemplateSpec& spec) : spec_(spec) {
    Rng jitter_rng(mix_seed(spec.seed) ^ 0xa5a5a5a5ull);
    for (int id = 0; id < spec.n_identities; ++id) {
      LandmarkSet base;
      for (int i = 0; i < kNumLandmarks; ++i) base.pts[i] = template_landmarks()[i];
      for (int i = 0; i < kNumLandmarks; ++i) {
        if (is_pose_anchor(i)) continue;
        base.pts[i].x += jitter_rng.normal(0.0, spec.identity_jitter);
        base.pts[i].y += jitter_rng.normal(0.0, spec.identity_jitter);
      }
      bases_.push_back(base);
    }
  }

  const SyntheticTemplateSpec& spec() const { return spec_; }
  const LandmarkSet& base(int identity) const { return bases_.at(identity); }

  // Applies expression fields, then yaw/pitch displacements derived by
  // inverting the pose heuristic, then in-plane roll. Zero pose and zero AUs
  // return the identity base exactly.
  LandmarkSet place(int identity, double yaw_deg, double pitch_deg, double roll_deg,
                    const ExpressionVector& e) const {
    LandmarkSet lms = bases_.at(identity);
    auto& p = lms.pts;

    double open = e.v[kAuMouthOpen] * spec_.mouth_open;
    double raise = e.v[kAuBrowRaise] * spec_.brow_raise;
    double close = e.v[kAuEyeClose];
    for (int i = 55; i <= 59; ++i) p[i].y += open * 0.9;   // lower outer lip
    for (int i = 65; i <= 67; ++i) p[i].y += open * 0.85;  // lower inner lip
    for (int i = 61; i <= 63; ++i) p[i].y -= open * 0.1;   // upper inner lip
    for (int i = 7; i <= 9; ++i) p[i].y += open * 0.5;     // chin drops
    for (int i = 17; i <= 26; ++i) p[i].y -= raise;
    for (int i : {37, 38, 43, 44}) p[i].y += close * spec_.eye_close;  // upper lids
    for (int i : {40, 41, 46, 47}) p[i].y -= close * spec_.eye_close;  // lower lids
    for (int i = 17; i <= 26; ++i) p[i].y += close * 0.03;             // squint

    Point2d el = {0.5 * (p[kLeftEyeOuter].x + p[kLeftEyeInner].x),
                  0.5 * (p[kLeftEyeOuter].y + p[kLeftEyeInner].y)};
    Point2d er = {0.5 * (p[kRightEyeInner].x + p[kRightEyeOuter].x),
                  0.5 * (p[kRightEyeInner].y + p[kRightEyeOuter].y)};
    double io = er.x - el.x;

    double yaw_rad = yaw_deg * M_PI / 180.0;
    double delta = std::tan(yaw_rad) * io * 0.5;
    if (delta != 0.0) {
      for (int i = 27; i <= 35; ++i) p[i].x += delta;        // nose rigid
      for (int i = 0; i <= 16; ++i) p[i].x += 0.6 * delta;   // jaw slides
      for (int i = 17; i <= 26; ++i) p[i].x += 0.3 * delta;
      for (int i = 48; i <= 67; ++i) p[i].x += 0.5 * delta;
      for (int i : {37, 38, 40, 41, 43, 44, 46, 47}) p[i].x += 0.2 * delta;
    }

    double pitch_rad = pitch_deg * M_PI / 180.0;
    double dv = std::tan(pitch_rad) * io;
    if (dv != 0.0) {
      for (int i = 27; i <= 35; ++i) p[i].y += dv;
      for (int i = 17; i <= 26; ++i) p[i].y += 0.35 * dv;
      for (int i : {37, 38, 40, 41, 43, 44, 46, 47}) p[i].y += 0.25 * dv;
      for (int i = 0; i <= 16; ++i) p[i].y += 0.15 * dv;
      for (int i = 49; i <= 53; ++i) p[i].y += 0.1 * dv;
      for (int i = 55; i <= 67; ++i) p[i].y += 0.1 * dv;
    }

    if (roll_deg != 0.0) {
      double roll_rad = roll_deg * M_PI / 180.0;
      Point2d center = {0.5 * (el.x + er.x), 0.5 * (el.y + er.y)};
      for (auto& pt : p) pt = geo_detail::rotate_about(pt, center, roll_rad);
    }

    for (int i = 0; i < kNumLandmarks; ++i)
      if (p[i].x < 0.0 || p[i].x > 1.0 || p[i].y < 0.0 || p[i].y > 1.0)
        throw DataError("synthetic displacement pushed landmark " + std::to_string(i) +
                        " outside the unit square");
    return lms;
  }

  SyntheticSample sample(Rng& rng, int identity) const {
    double yaw = rng.uniform(-spec_.yaw_range_deg, spec_.yaw_range_deg);
    double pitch = rng.uniform(-spec_.pitch_range_deg, spec_.pitch_range_deg);
    double roll = rng.uniform(-spec_.roll_range_deg, spec_.roll_range_deg);
    ExpressionVector e;
    e.v[kAuBrowRaise] = rng.uniform(0.0, 1.0);
    e.v[kAuMouthOpen] = rng.uniform(0.0, 1.0);
    e.v[kAuEyeClose] = rng.uniform(0.0, 1.0);
    SyntheticSample s;
    s.identity = identity;
    s.pose = PoseVector{{yaw / 90.0, pitch / 90.0, roll / 90.0}};
    s.expr = e;
    s.landmarks = place(identity, yaw, pitch, roll, e);
    return s;
  }

 private:
  SyntheticTemplateSpec spec_;
  std::vector<LandmarkSet> bases_;
};

// n samples with ground-truth (p, e); identities cycle.
inline std::vector<SyntheticSample> generate_synthetic_dataset(
    const SyntheticTemplateSpec& spec, int n) {
  SyntheticGenerator gen(spec);
  Rng rng(mix_seed(spec.seed) ^ 0xd1b54a32d192ed03ull);
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(gen.sample(rng, i % spec.n_identities));
  return out;
}

// ---- cartoon face rendering (fixture images) --------------------------------

struct IdentityStyle {
  std::array<float, 3> skin, lip, eye, brow, bg;
};

inline IdentityStyle identity_style(int identity, std::uint64_t seed) {
  Rng rng(mix_seed(seed) ^ mix_seed(0x9e37u + static_cast<std::uint64_t>(identity)));
  auto color = [&](float lo, float hi) {
    return std::array<float, 3>{static_cast<float>(rng.uniform(lo, hi)),
                                static_cast<float>(rng.uniform(lo, hi)),
                                static_cast<float>(rng.uniform(lo, hi))};
  };
  IdentityStyle s;
  s.skin = color(0.45f, 0.95f);
  s.lip = color(0.3f, 0.9f);
  s.eye = color(0.05f, 0.6f);
  s.brow = color(0.05f, 0.5f);
  s.bg = color(0.0f, 0.35f);
  return s;
}

namespace synth_detail {

inline void fill_polygon(std::vector<float>& plane, int h, int w,
                         const std::vector<Point2d>& poly_px, float value) {
  if (poly_px.size() < 3) return;
  for (int y = 0; y < h; ++y) {
    double yc = y + 0.5;
    std::vector<double> xs;
    for (std::size_t i = 0; i < poly_px.size(); ++i) {
      const Point2d& a = poly_px[i];
      const Point2d& b = poly_px[(i + 1) % poly_px.size()];
      if ((a.y <= yc) == (b.y <= yc)) continue;
      xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      int x0 = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      int x1 = std::min(w - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5)));
      for (int x = x0; x <= x1; ++x) plane[static_cast<std::size_t>(y) * w + x] = value;
    }
  }
}

inline void fill_polygon_rgb(FaceImage& img01, const std::vector<Point2d>& poly_px,
                             const std::array<float, 3>& rgb) {
  // img01 holds [0,1] values during rendering
  int h = img01.height, w = img01.width;
  for (int c = 0; c < 3; ++c) {
    std::vector<float> plane(static_cast<std::size_t>(h) * w, -1.f);
    fill_polygon(plane, h, w, poly_px, 1.f);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (plane[static_cast<std::size_t>(y) * w + x] > 0.f) img01.at(c, y, x) = rgb[c];
  }
}

inline void draw_polyline_rgb(FaceImage& img01, const std::vector<Point2d>& pts_px,
                              const std::array<float, 3>& rgb, bool closed) {
  int h = img01.height, w = img01.width;
  BoundaryImage mask(h, w);
  std::array<float, 3> one = {1.f, 1.f, 1.f};
  auto clamp_px = [&](const Point2d& p) {
    return std::pair<int, int>(
        std::clamp(static_cast<int>(std::lround(p.x)), 0, w - 1),
        std::clamp(static_cast<int>(std::lround(p.y)), 0, h - 1));
  };
  std::size_t n = pts_px.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    auto [x0, y0] = clamp_px(pts_px[i]);
    auto [x1, y1] = clamp_px(pts_px[i + 1]);
    geo_detail::draw_segment(mask, x0, y0, x1, y1, one);
  }
  if (closed && n > 2) {
    auto [x0, y0] = clamp_px(pts_px[n - 1]);
    auto [x1, y1] = clamp_px(pts_px[0]);
    geo_detail::draw_segment(mask, x0, y0, x1, y1, one);
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.at(0, y, x) > 0.f)
        for (int c = 0; c < 3; ++c) img01.at(c, y, x) = rgb[c];
}

}  // namespace synth_detail

// Flat-shaded face raster driven by the landmark geometry; identity shows up
// as the color scheme plus the per-identity shape jitter. Output in [-1,1].
inline FaceImage render_cartoon_face(const LandmarkSet& lms, const IdentityStyle& style,
                                     int h, int w, double illum = 1.0) {
  FaceImage img(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = style.bg[c];

  auto to_px = [&](const Point2d& p) {
    return Point2d{p.x * (w - 1), p.y * (h - 1)};
  };

  // head: jaw arc plus a mirrored crown
  std::vector<Point2d> head;
  for (int i = 0; i <= 16; ++i) head.push_back(to_px(lms.pts[i]));
  Point2d left = lms.pts[0], right = lms.pts[16];
  Point2d mid = {0.5 * (left.x + right.x), 0.5 * (left.y + right.y)};
  Point2d chin = lms.pts[8];
  double nx = mid.x - chin.x, ny = mid.y - chin.y;
  double nl = std::hypot(nx, ny);
  if (nl < 1e-9) {
    nx = 0;
    ny = -1;
  } else {
    nx /= nl;
    ny /= nl;
  }
  double ux = right.x - mid.x, uy = right.y - mid.y;
  double r = std::hypot(ux, uy) * 0.9;
  for (int k = 1; k < 8; ++k) {
    double t = M_PI * k / 8.0;
    Point2d p{mid.x + std::cos(t) * ux + std::sin(t) * r * nx,
              mid.y + std::cos(t) * uy + std::sin(t) * r * ny};
    head.push_back(to_px(p));
  }
  synth_detail::fill_polygon_rgb(img, head, style.skin);

  std::array<float, 3> skin_shade = {style.skin[0] * 0.6f, style.skin[1] * 0.6f,
                                     style.skin[2] * 0.6f};
  auto pts_px = [&](int first, int last) {
    std::vector<Point2d> v;
    for (int i = first; i <= last; ++i) v.push_back(to_px(lms.pts[i]));
    return v;
  };
  synth_detail::draw_polyline_rgb(img, pts_px(27, 30), skin_shade, false);
  synth_detail::draw_polyline_rgb(img, pts_px(31, 35), skin_shade, false);

  synth_detail::fill_polygon_rgb(img, pts_px(36, 41), style.eye);
  synth_detail::fill_polygon_rgb(img, pts_px(42, 47), style.eye);
  synth_detail::draw_polyline_rgb(img, pts_px(17, 21), style.brow, false);
  synth_detail::draw_polyline_rgb(img, pts_px(22, 26), style.brow, false);
  synth_detail::fill_polygon_rgb(img, pts_px(48, 59), style.lip);
  synth_detail::fill_polygon_rgb(img, pts_px(60, 67), {0.08f, 0.04f, 0.04f});

  for (float& v : img.chw) {
    float shaded = std::clamp(v * static_cast<float>(illum), 0.0f, 1.0f);
    v = shaded * 2.0f - 1.0f;
  }
  return img;
}

}  // namespace facemanip
