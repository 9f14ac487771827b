#pragma once

#include <png.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/io/json_files.hpp"
#include "keyvote3d/io/ply.hpp"

namespace keyvote3d::io {

/// Pinhole intrinsics in pixels.
struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorCode::InvalidArgument, "fx and fy must be > 0");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
      throw Error(ErrorCode::InvalidArgument, "principal point outside the image");
    }
  }
};

/// Row-major single-channel image.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  const T& at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
};

/// Depth in meters; 0 marks an invalid pixel.
using DepthImage = Image<double>;
using Mask = Image<std::uint8_t>;

enum class DepthUnit { Meters, Millimeters };

inline double unit_scale(DepthUnit u) { return u == DepthUnit::Millimeters ? 1e-3 : 1.0; }

/// Valid (depth > 0, mask nonzero) pixels lifted to camera-frame points in
/// row-major pixel order.
inline PointCloud backproject(const DepthImage& depth, const CameraIntrinsics& k,
                              const std::optional<Mask>& mask = std::nullopt) {
  k.validate();
  if (depth.width != k.width || depth.height != k.height) {
    throw Error(ErrorCode::DimensionMismatch, "depth image size differs from intrinsics");
  }
  if (mask && (mask->width != depth.width || mask->height != depth.height)) {
    throw Error(ErrorCode::DimensionMismatch, "mask size differs from depth image");
  }
  std::vector<Point3> pts;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double d = depth.at(u, v);
      if (!(d > 0.0) || !std::isfinite(d)) continue;
      if (mask && mask->at(u, v) == 0) continue;
      pts.emplace_back(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d);
    }
  }
  return PointCloud(std::move(pts));
}

/// Inverse pinhole projection of a camera-frame point to pixel coordinates.
inline Eigen::Vector2d project(const Point3& p, const CameraIntrinsics& k) {
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

inline nlohmann::json intrinsics_to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
          {"width", k.width}, {"height", k.height}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics k = with_json_errors([&] {
    CameraIntrinsics out;
    out.fx = j.at("fx").get<double>();
    out.fy = j.at("fy").get<double>();
    out.cx = j.at("cx").get<double>();
    out.cy = j.at("cy").get<double>();
    out.width = j.at("width").get<int>();
    out.height = j.at("height").get<int>();
    return out;
  });
  k.validate();
  return k;
}

inline CameraIntrinsics load_intrinsics(const std::filesystem::path& path) {
  return intrinsics_from_json(parse_json(read_file(path)));
}

namespace detail {

constexpr std::size_t kMaxImagePixels = std::size_t{1} << 25;

inline void check_image_size(std::uint64_t w, std::uint64_t h) {
  if (w == 0 || h == 0 || w > 1u << 20 || h > 1u << 20 || w * h > kMaxImagePixels) {
    throw Error(ErrorCode::ParseError, "implausible image size");
  }
}

struct PngReadState {
  std::string_view data;
  std::size_t pos = 0;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t len) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->data.size() - st->pos < len) png_error(png, "truncated PNG");
  std::memcpy(out, st->data.data() + st->pos, len);
  st->pos += len;
}

struct PngHeader {
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
};

// Only trivially destructible locals may live in the frames that call setjmp.
inline bool png_read_header(png_structp png, png_infop info, PngHeader& h) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_info(png, info);
  png_get_IHDR(png, info, &h.width, &h.height, &h.bit_depth, &h.color_type, nullptr,
               nullptr, nullptr);
  return true;
}

inline bool png_read_rows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  return true;
}

inline Image<double> decode_png(std::string_view data) {
  struct Guard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~Guard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
  } g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                 [](png_structp, png_const_charp) {},
                                 [](png_structp, png_const_charp) {});
  if (!g.png) throw Error(ErrorCode::IoError, "libpng init failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw Error(ErrorCode::IoError, "libpng init failed");
  PngReadState st{data, 0};
  png_set_read_fn(g.png, &st, png_read_from_memory);

  PngHeader h;
  if (!png_read_header(g.png, g.info, h)) throw Error(ErrorCode::ParseError, "corrupt PNG header");
  if (h.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(ErrorCode::UnsupportedFormat, "only single-channel grayscale PNG is supported");
  }
  check_image_size(h.width, h.height);
  if (h.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(g.png);
  if (h.bit_depth == 16) png_set_swap(g.png);  // to host little-endian
  png_read_update_info(g.png, g.info);

  const std::size_t rowbytes = png_get_rowbytes(g.png, g.info);
  std::vector<png_byte> buf(rowbytes * h.height);
  std::vector<png_bytep> rows(h.height);
  for (png_uint_32 r = 0; r < h.height; ++r) rows[r] = buf.data() + r * rowbytes;
  if (!png_read_rows(g.png, rows.data())) throw Error(ErrorCode::ParseError, "corrupt PNG data");

  Image<double> img(static_cast<int>(h.width), static_cast<int>(h.height));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (h.bit_depth == 16) {
      std::uint16_t v;
      std::memcpy(&v, buf.data() + 2 * i, 2);
      img.pixels[i] = v;
    } else {
      img.pixels[i] = buf[i];
    }
  }
  return img;
}

/// Reads whitespace-separated header tokens (skipping '#' comments) for
/// netpbm-style headers; stops after `count` tokens and one whitespace byte.
inline std::vector<std::string_view> netpbm_tokens(std::string_view data, std::size_t count,
                                                   std::size_t& pos) {
  std::vector<std::string_view> tok;
  while (tok.size() < count) {
    while (pos < data.size() && (std::isspace(static_cast<unsigned char>(data[pos])) || data[pos] == '#')) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        ++pos;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos == start) throw Error(ErrorCode::ParseError, "truncated image header");
    tok.push_back(data.substr(start, pos - start));
  }
  if (pos >= data.size()) throw Error(ErrorCode::ParseError, "image has no pixel data");
  ++pos;
  return tok;
}

template <typename T>
T header_number(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, "bad image header field '" + std::string(s) + "'");
  }
  return v;
}

inline Image<double> decode_pgm(std::string_view data) {
  std::size_t pos = 0;
  const auto tok = netpbm_tokens(data, 4, pos);
  if (tok[0] != "P5") throw Error(ErrorCode::UnsupportedFormat, "only binary P5 PGM is supported");
  const auto w = header_number<std::uint64_t>(tok[1]);
  const auto h = header_number<std::uint64_t>(tok[2]);
  const auto maxval = header_number<std::uint32_t>(tok[3]);
  check_image_size(w, h);
  if (maxval == 0 || maxval > 65535) throw Error(ErrorCode::ParseError, "bad PGM maxval");
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (data.size() - pos < w * h * bpp) throw Error(ErrorCode::ParseError, "truncated PGM data");
  Image<double> img(static_cast<int>(w), static_cast<int>(h));
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = bpp == 2 ? (p[2 * i] << 8) | p[2 * i + 1] : p[i];
  }
  return img;
}

inline Image<double> decode_pfm(std::string_view data) {
  std::size_t pos = 0;
  const auto tok = netpbm_tokens(data, 4, pos);
  if (tok[0] != "Pf") throw Error(ErrorCode::UnsupportedFormat, "only single-channel Pf PFM is supported");
  const auto w = header_number<std::uint64_t>(tok[1]);
  const auto h = header_number<std::uint64_t>(tok[2]);
  const auto scale = header_number<double>(tok[3]);
  check_image_size(w, h);
  if (scale == 0.0 || !std::isfinite(scale)) throw Error(ErrorCode::ParseError, "bad PFM scale");
  if (data.size() - pos < w * h * 4) throw Error(ErrorCode::ParseError, "truncated PFM data");
  const bool little = scale < 0.0;
  Image<double> img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      std::uint32_t bits;
      std::memcpy(&bits, data.data() + pos + 4 * (r * w + c), 4);
      if (!little) bits = __builtin_bswap32(bits);
      // Rows are stored bottom to top.
      img.pixels[(h - 1 - r) * w + c] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

}  // namespace detail

/// Decodes a single-channel PNG (8/16-bit), binary PGM (8/16-bit) or PFM
/// (32-bit float) into raw sample values.
inline Image<double> decode_gray_image(std::string_view data) {
  static constexpr std::string_view kPngSig{"\x89PNG\r\n\x1a\n", 8};
  if (data.substr(0, 8) == kPngSig) return detail::decode_png(data);
  if (data.substr(0, 2) == "P5") return detail::decode_pgm(data);
  if (data.substr(0, 2) == "Pf") return detail::decode_pfm(data);
  if (data.substr(0, 2) == "PF") {
    throw Error(ErrorCode::UnsupportedFormat, "color PFM is not supported");
  }
  throw Error(ErrorCode::UnsupportedFormat, "unrecognized image format");
}

inline DepthImage load_depth(const std::filesystem::path& path, DepthUnit unit) {
  DepthImage img = decode_gray_image(read_file(path));
  const double s = unit_scale(unit);
  for (double& v : img.pixels) v = std::isfinite(v) && v > 0.0 ? v * s : 0.0;
  return img;
}

inline Mask load_mask(const std::filesystem::path& path) {
  const auto raw = decode_gray_image(read_file(path));
  Mask m(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) m.pixels[i] = raw.pixels[i] != 0.0 ? 1 : 0;
  return m;
}

namespace detail {

inline bool png_write_gray16(png_structp png, png_infop info, std::FILE* fp, int width,
                             int height, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

}  // namespace detail

/// 16-bit grayscale PNG.
inline void save_png16(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  std::vector<png_byte> buf(static_cast<std::size_t>(img.width) * img.height * 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    buf[2 * i] = static_cast<png_byte>(img.pixels[i] >> 8);
    buf[2 * i + 1] = static_cast<png_byte>(img.pixels[i] & 0xFF);
  }
  std::vector<png_bytep> rows(img.height);
  for (int r = 0; r < img.height; ++r) rows[r] = buf.data() + static_cast<std::size_t>(r) * img.width * 2;
  const bool ok = png && info &&
                  detail::png_write_gray16(png, info, fp, img.width, img.height, rows.data());
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  if (!ok) throw Error(ErrorCode::IoError, "PNG encoding failed for " + path.string());
}

/// Binary PGM; 16-bit when maxval > 255.
inline void save_pgm(const std::filesystem::path& path, const Image<std::uint16_t>& img,
                     std::uint16_t maxval = 65535) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n" + std::to_string(maxval) + "\n";
  for (auto v : img.pixels) {
    if (maxval > 255) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  write_file(path, out);
}

/// Little-endian single-channel PFM.
inline void save_pfm(const std::filesystem::path& path, const Image<float>& img) {
  std::string out = "Pf\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n-1.0\n";
  for (int r = img.height - 1; r >= 0; --r) {
    for (int c = 0; c < img.width; ++c) {
      const float v = img.at(c, r);
      out.append(reinterpret_cast<const char*>(&v), 4);
    }
  }
  write_file(path, out);
}

}  // namespace keyvote3d::io
