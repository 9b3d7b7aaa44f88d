#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "facemanip/error.hpp"
#include "facemanip/geometry.hpp"
#include "facemanip/models.hpp"

namespace facemanip {

namespace pngio {

// Minimal RGB8 PNG writer using stored (uncompressed) deflate blocks. Output
// bytes depend only on the pixel data, which keeps golden files stable across
// zlib/libpng versions and platforms.

inline std::uint32_t crc32(const unsigned char* data, std::size_t n,
                           std::uint32_t crc = 0xffffffffu) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc;
}

inline std::uint32_t adler32(const unsigned char* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

inline void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

inline void put_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint32_t crc = crc32(out.data() + start, out.size() - start) ^ 0xffffffffu;
  put_be32(out, crc);
}

// rgb: interleaved RGB rows, size h*w*3.
inline std::vector<unsigned char> encode_rgb8(int h, int w,
                                              const std::vector<unsigned char>& rgb) {
  require(static_cast<std::size_t>(h) * w * 3 == rgb.size(), "encode_rgb8: size mismatch");
  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  put_chunk(out, "IHDR", ihdr);

  // Raw scanlines: filter byte 0 + row.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(h) * (1 + 3 * w));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), rgb.begin() + static_cast<std::size_t>(y) * w * 3,
               rgb.begin() + static_cast<std::size_t>(y + 1) * w * 3);
  }

  std::vector<unsigned char> idat = {0x78, 0x01};  // zlib header, no compression
  std::size_t pos = 0;
  while (pos < raw.size() || raw.empty()) {
    std::size_t len = std::min<std::size_t>(raw.size() - pos, 65535);
    bool final = pos + len == raw.size();
    idat.push_back(final ? 1 : 0);  // BFINAL | BTYPE=00 (stored)
    idat.push_back(static_cast<unsigned char>(len & 0xff));
    idat.push_back(static_cast<unsigned char>(len >> 8));
    idat.push_back(static_cast<unsigned char>(~len & 0xff));
    idat.push_back(static_cast<unsigned char>((~len >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + pos, raw.begin() + pos + len);
    pos += len;
    if (final) break;
  }
  put_be32(idat, adler32(raw.data(), raw.size()));
  put_chunk(out, "IDAT", idat);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace pngio

inline void write_png_rgb8(const std::string& path, int h, int w,
                           const std::vector<unsigned char>& rgb) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  auto bytes = pngio::encode_rgb8(h, w, rgb);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write PNG: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("short write: " + path);
}

inline unsigned char quantize_unit(float v) {
  float s = v * 255.0f;
  int q = static_cast<int>(s + 0.5f);
  return static_cast<unsigned char>(std::clamp(q, 0, 255));
}

// [0,1] CHW raster -> interleaved RGB bytes.
inline std::vector<unsigned char> boundary_to_rgb8(const BoundaryImage& img) {
  std::vector<unsigned char> rgb(static_cast<std::size_t>(img.height) * img.width * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            quantize_unit(img.at(c, y, x));
  return rgb;
}

// [-1,1] CHW raster -> interleaved RGB bytes via the affine map to [0,255].
inline std::vector<unsigned char> face_to_rgb8(const FaceImage& img) {
  std::vector<unsigned char> rgb(static_cast<std::size_t>(img.height) * img.width * 3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
            quantize_unit((img.at(c, y, x) + 1.0f) * 0.5f);
  return rgb;
}

inline void write_boundary_png(const std::string& path, const BoundaryImage& img) {
  write_png_rgb8(path, img.height, img.width, boundary_to_rgb8(img));
}

inline void write_face_png(const std::string& path, const FaceImage& img) {
  write_png_rgb8(path, img.height, img.width, face_to_rgb8(img));
}

}  // namespace facemanip
