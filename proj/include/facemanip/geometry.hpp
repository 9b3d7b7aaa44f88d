#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "facemanip/error.hpp"

namespace facemanip {

inline constexpr int kNumLandmarks = 68;

struct Point2d {
  double x = 0.0, y = 0.0;
};

// 68 points in the standard iBUG ordering (jaw 0-16, brows 17-26, nose 27-35,
// eyes 36-47, lips 48-67), normalized to [0,1] relative to the aligned crop.
struct LandmarkSet {
  std::array<Point2d, kNumLandmarks> pts{};

  void validate() const {
    for (const auto& p : pts)
      if (!std::isfinite(p.x) || !std::isfinite(p.y))
        throw DataError("landmark set contains non-finite coordinates");
  }
};

// One polyline per facial sub-component; eyes and lips are closed loops.
struct BoundaryComponent {
  int first, last;
  bool closed;
  int palette;  // index into kPalette
};

inline constexpr std::array<BoundaryComponent, 9> kBoundaryComponents = {{
    {0, 16, false, 0},   // jaw
    {17, 21, false, 1},  // left brow
    {22, 26, false, 1},  // right brow
    {27, 30, false, 2},  // nose ridge
    {31, 35, false, 2},  // nose base
    {36, 41, true, 3},   // left eye
    {42, 47, true, 3},   // right eye
    {48, 59, true, 4},   // outer lip
    {60, 67, true, 4},   // inner lip
}};

// Fixed per-component stroke colors: jaw, brows, nose, eyes, lips.
inline constexpr std::array<std::array<float, 3>, 5> kPalette = {{
    {0.f, 1.f, 1.f},  // jaw: cyan
    {0.f, 1.f, 0.f},  // brows: green
    {1.f, 1.f, 0.f},  // nose: yellow
    {1.f, 0.f, 0.f},  // eyes: red
    {1.f, 0.f, 1.f},  // lips: magenta
}};

// RGB raster in CHW order; stroke pixels carry the component palette color,
// everything else is exactly zero. Predicted (soft) boundaries reuse this
// type with arbitrary values in [0,1].
struct BoundaryImage {
  int height = 0, width = 0;
  std::vector<float> chw;

  BoundaryImage() = default;
  BoundaryImage(int h, int w) : height(h), width(w), chw(3ull * h * w, 0.f) {}

  float& at(int c, int y, int x) {
    return chw[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return chw[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// (yaw, pitch, roll), each degrees / 90.
struct PoseVector {
  std::array<double, 3> v{};
  double yaw() const { return v[0]; }
  double pitch() const { return v[1]; }
  double roll() const { return v[2]; }
};

inline constexpr int kNumActionUnits = 17;

// AU intensities normalized to [0,1].
struct ExpressionVector {
  std::array<double, kNumActionUnits> v{};
};

struct CropRect {
  double x = 0.0, y = 0.0, width = 0.0, height = 0.0;
};

struct NormalizedLandmarks {
  LandmarkSet landmarks;
  int clamped = 0;  // points that fell outside the crop
};

inline NormalizedLandmarks normalize_landmarks(const std::vector<Point2d>& raw,
                                               const CropRect& crop) {
  if (static_cast<int>(raw.size()) != kNumLandmarks)
    throw ContractError("normalize_landmarks: expected 68 points, got " +
                        std::to_string(raw.size()));
  if (!(crop.width > 0.0) || !(crop.height > 0.0))
    throw DataError("normalize_landmarks: crop must have positive extent");
  NormalizedLandmarks out;
  for (int i = 0; i < kNumLandmarks; ++i) {
    if (!std::isfinite(raw[i].x) || !std::isfinite(raw[i].y))
      throw DataError("normalize_landmarks: non-finite coordinate at point " +
                      std::to_string(i));
    double u = (raw[i].x - crop.x) / crop.width;
    double v = (raw[i].y - crop.y) / crop.height;
    bool outside = u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0;
    if (outside) ++out.clamped;
    out.landmarks.pts[i] = {std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0)};
  }
  return out;
}

namespace geo_detail {

// Normalized coordinate -> pixel index (round half away from zero).
inline int to_px(double v, int n) {
  long r = std::lround(v * (n - 1));
  return static_cast<int>(std::clamp<long>(r, 0, n - 1));
}

inline void set_px(BoundaryImage& img, int x, int y, const std::array<float, 3>& rgb) {
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
}

// Integer midpoint rasterization. Along the major axis the minor offset is
// floor((2*|dminor|*i + |dmajor|) / (2*|dmajor|)), evaluated incrementally;
// ties round up (away from the start pixel). Axis ties are x-major.
inline void draw_segment(BoundaryImage& img, int x0, int y0, int x1, int y1,
                         const std::array<float, 3>& rgb) {
  int dx = x1 - x0, dy = y1 - y0;
  int adx = std::abs(dx), ady = std::abs(dy);
  if (adx == 0 && ady == 0) {
    set_px(img, x0, y0, rgb);
    return;
  }
  if (adx >= ady) {
    int sx = dx >= 0 ? 1 : -1, sy = dy >= 0 ? 1 : -1;
    long long acc = adx;  // 2*ady*i + adx at i = 0
    long long o = 0;
    set_px(img, x0, y0, rgb);
    for (int i = 1; i <= adx; ++i) {
      acc += 2LL * ady;
      while (acc >= 2LL * adx * (o + 1)) ++o;
      set_px(img, x0 + sx * i, y0 + sy * static_cast<int>(o), rgb);
    }
  } else {
    int sx = dx >= 0 ? 1 : -1, sy = dy >= 0 ? 1 : -1;
    long long acc = ady;
    long long o = 0;
    set_px(img, x0, y0, rgb);
    for (int i = 1; i <= ady; ++i) {
      acc += 2LL * adx;
      while (acc >= 2LL * ady * (o + 1)) ++o;
      set_px(img, x0 + sx * static_cast<int>(o), y0 + sy * i, rgb);
    }
  }
}

}  // namespace geo_detail

// Connects adjacent landmarks into the boundary image. Integer-only pixel
// math keeps output byte-identical across runs and platforms.
inline BoundaryImage rasterize_boundary(const LandmarkSet& lms, int height, int width) {
  if (height < 16 || width < 16)
    throw DataError("rasterize_boundary: resolution below 16x16");
  lms.validate();
  BoundaryImage img(height, width);
  for (const auto& comp : kBoundaryComponents) {
    const auto& rgb = kPalette[comp.palette];
    auto px = [&](int i) {
      return std::pair<int, int>(geo_detail::to_px(lms.pts[i].x, width),
                                 geo_detail::to_px(lms.pts[i].y, height));
    };
    for (int i = comp.first; i < comp.last; ++i) {
      auto [x0, y0] = px(i);
      auto [x1, y1] = px(i + 1);
      geo_detail::draw_segment(img, x0, y0, x1, y1, rgb);
    }
    if (comp.closed) {
      auto [x0, y0] = px(comp.last);
      auto [x1, y1] = px(comp.first);
      geo_detail::draw_segment(img, x0, y0, x1, y1, rgb);
    }
  }
  return img;
}

namespace geo_detail {

inline Point2d midpoint(const Point2d& a, const Point2d& b) {
  return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
}

inline Point2d rotate_about(const Point2d& p, const Point2d& c, double rad) {
  double ca = std::cos(rad), sa = std::sin(rad);
  double rx = p.x - c.x, ry = p.y - c.y;
  return {c.x + ca * rx - sa * ry, c.y + sa * rx + ca * ry};
}

}  // namespace geo_detail

// Landmark indices the pose heuristic reads. The synthetic generator keeps
// these fixed under expression displacements so generated pose labels stay
// recoverable.
inline constexpr int kNoseTip = 30;
inline constexpr int kLeftEyeOuter = 36, kLeftEyeInner = 39;
inline constexpr int kRightEyeInner = 42, kRightEyeOuter = 45;
inline constexpr int kMouthLeft = 48, kMouthRight = 54;

// Closed-form pose from landmark geometry:
//   roll  = angle of the eye-corner line,
//   yaw   = atan of the nose-tip horizontal asymmetry between the outer eye
//           corners (measured after de-rotating by roll),
//   pitch = atan of the nose-tip vertical deviation from the eye/mouth-corner
//           midline, normalized by the inter-ocular distance.
// All in degrees / 90. Roll is clamped to +-135 degrees.
inline PoseVector pose_from_landmarks(const LandmarkSet& lms) {
  lms.validate();
  using geo_detail::midpoint;
  using geo_detail::rotate_about;
  Point2d el = midpoint(lms.pts[kLeftEyeOuter], lms.pts[kLeftEyeInner]);
  Point2d er = midpoint(lms.pts[kRightEyeInner], lms.pts[kRightEyeOuter]);
  double ex = er.x - el.x, ey = er.y - el.y;
  double io = std::hypot(ex, ey);
  if (io < 1e-9) throw DataError("pose_from_landmarks: degenerate inter-ocular distance");
  double roll = std::atan2(ey, ex);
  constexpr double kRollLimit = 0.75 * M_PI;  // 135 degrees
  roll = std::clamp(roll, -kRollLimit, kRollLimit);

  Point2d center = midpoint(el, er);
  Point2d elr = rotate_about(el, center, -roll);
  Point2d err = rotate_about(er, center, -roll);
  Point2d nose = rotate_about(lms.pts[kNoseTip], center, -roll);
  Point2d ml = rotate_about(lms.pts[kMouthLeft], center, -roll);
  Point2d mr = rotate_about(lms.pts[kMouthRight], center, -roll);

  double dl = nose.x - elr.x;
  double dr = err.x - nose.x;
  double yaw = std::atan((dl - dr) / io);

  double eye_y = 0.5 * (elr.y + err.y);
  double mouth_y = 0.5 * (ml.y + mr.y);
  double dev = (nose.y - 0.5 * (eye_y + mouth_y)) / io;
  double pitch = std::atan(dev);

  constexpr double rad2unit = 180.0 / M_PI / 90.0;
  return PoseVector{{yaw * rad2unit, pitch * rad2unit, roll * rad2unit}};
}

namespace geo_detail {

inline constexpr std::array<int, kNumLandmarks> make_mirror_permutation() {
  std::array<int, kNumLandmarks> p{};
  for (int i = 0; i < kNumLandmarks; ++i) p[i] = i;
  auto swp = [&](int a, int b) {
    p[a] = b;
    p[b] = a;
  };
  for (int i = 0; i < 8; ++i) swp(i, 16 - i);              // jaw
  for (int i = 0; i < 5; ++i) swp(17 + i, 26 - i);         // brows
  swp(31, 35);                                             // nose base
  swp(32, 34);
  swp(36, 45);                                             // eyes
  swp(37, 44);
  swp(38, 43);
  swp(39, 42);
  swp(40, 47);
  swp(41, 46);
  swp(48, 54);                                             // outer lip
  swp(49, 53);
  swp(50, 52);
  swp(55, 59);
  swp(56, 58);
  swp(60, 64);                                             // inner lip
  swp(61, 63);
  swp(65, 67);
  return p;
}

inline constexpr std::array<int, kNumLandmarks> kMirrorPerm = make_mirror_permutation();

}  // namespace geo_detail

// Horizontal mirror about x = 0.5 with the matching left/right index swap.
inline LandmarkSet mirror_landmarks(const LandmarkSet& lms) {
  LandmarkSet out;
  for (int i = 0; i < kNumLandmarks; ++i) {
    const Point2d& src = lms.pts[geo_detail::kMirrorPerm[i]];
    out.pts[i] = {1.0 - src.x, src.y};
  }
  return out;
}

// Plain-text landmark file: 68 "x y" lines in pixel coordinates, optional
// leading '#' comment lines.
inline std::vector<Point2d> read_landmark_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmark file: " + path);
  std::vector<Point2d> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Point2d p;
    if (!(ls >> p.x >> p.y))
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 'x y'");
    pts.push_back(p);
  }
  if (static_cast<int>(pts.size()) != kNumLandmarks)
    throw DataError(path + ": expected 68 landmarks, got " + std::to_string(pts.size()));
  return pts;
}

inline void write_landmark_file(const std::string& path, const std::vector<Point2d>& pts) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write landmark file: " + path);
  out << "# 68 landmarks, pixel coordinates\n";
  char buf[64];
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof(buf), "%.6f %.6f\n", p.x, p.y);
    out << buf;
  }
}

}  // namespace facemanip
