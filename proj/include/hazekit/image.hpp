#pragma once

#include <png.h>
#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hazekit {

/// Interleaved row-major image, values in [0, 1].
struct Image {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;
  std::vector<double> px;

  Image() = default;
  Image(std::size_t h_, std::size_t w_, std::size_t c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), px(h_ * w_ * c_, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t ch) {
    return px[(y * w + x) * c + ch];
  }
  double at(std::size_t y, std::size_t x, std::size_t ch) const {
    return px[(y * w + x) * c + ch];
  }
  std::size_t size() const { return px.size(); }
};

/// Single-channel row-major field (depth or transmission).
struct Grid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(std::size_t h_, std::size_t w_, double fill = 0.0)
      : h(h_), w(w_), v(h_ * w_, fill) {}

  double& at(std::size_t y, std::size_t x) { return v[y * w + x]; }
  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
  std::size_t size() const { return v.size(); }
};

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

/// Snap to the 8-bit grid; round-trips losslessly through PNG.
inline Image quantize8(const Image& img) {
  Image out = img;
  for (double& p : out.px) {
    p = std::round(clamp01(p) * 255.0) / 255.0;
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.c != 3) {
    throw std::invalid_argument("write_png: expected 3 channels, got " +
                                std::to_string(img.c));
  }
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    bytes[i] =
        static_cast<unsigned char>(std::lround(clamp01(img.px[i]) * 255.0));
  }
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.w);
  pi.height = static_cast<png_uint_32>(img.h);
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.string().c_str(), 0, bytes.data(), 0,
                               nullptr)) {
    throw std::runtime_error("write_png: cannot write " + path.string() +
                             ": " + pi.message);
  }
}

inline Image read_png(const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.string().c_str())) {
    throw std::runtime_error("read_png: cannot open " + path.string() + ": " +
                             pi.message);
  }
  pi.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("read_png: cannot decode " + path.string() +
                             ": " + pi.message);
  }
  Image img(pi.height, pi.width, 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    img.px[i] = static_cast<double>(bytes[i]) / 255.0;
  }
  return img;
}

// Float depth container: 16-byte header (magic "HZDM", u32 height, u32 width,
// u32 reserved, little-endian) followed by row-major 32-bit floats.
inline constexpr char kDepthMagic[4] = {'H', 'Z', 'D', 'M'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace detail

inline void write_hzdm(const std::filesystem::path& path, const Grid& g) {
  std::string buf;
  buf.append(kDepthMagic, 4);
  detail::put_u32(buf, static_cast<std::uint32_t>(g.h));
  detail::put_u32(buf, static_cast<std::uint32_t>(g.w));
  detail::put_u32(buf, 0);
  for (double d : g.v) {
    const float f = static_cast<float>(d);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32(buf, bits);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os || !os.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error("write_hzdm: cannot write " + path.string());
  }
}

inline Grid read_hzdm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_hzdm: cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 16 || std::memcmp(buf.data(), kDepthMagic, 4) != 0) {
    throw std::runtime_error("read_hzdm: " + path.string() +
                             " is not a depth file");
  }
  const std::uint32_t h = detail::get_u32(buf.data() + 4);
  const std::uint32_t w = detail::get_u32(buf.data() + 8);
  if (buf.size() != 16 + std::size_t(h) * w * 4) {
    throw std::runtime_error("read_hzdm: " + path.string() +
                             " is truncated or has a bad header");
  }
  Grid g(h, w);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::uint32_t bits = detail::get_u32(buf.data() + 16 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    g.v[i] = static_cast<double>(f);
  }
  return g;
}

inline std::uint32_t file_crc32(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("file_crc32: cannot open " + path.string());
  }
  std::vector<char> buf(1 << 16);
  uLong crc = crc32(0L, Z_NULL, 0);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const std::streamsize got = is.gcount();
    if (got > 0) {
      crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()),
                  static_cast<uInt>(got));
    }
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::uint32_t buffer_crc32(const std::string& buf) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()),
              static_cast<uInt>(buf.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace hazekit
