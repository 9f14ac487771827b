#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"

namespace keyvote3d::io {

static_assert(std::endian::native == std::endian::little,
              "binary readers assume a little-endian host");

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

enum class PlyFormat { Ascii, BinaryLittleEndian };
enum class PlyScalar { Float32, Float64 };

namespace detail {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline bool parse_ply_type(std::string_view s, PlyType& t) {
  if (s == "char" || s == "int8") t = PlyType::Int8;
  else if (s == "uchar" || s == "uint8") t = PlyType::UInt8;
  else if (s == "short" || s == "int16") t = PlyType::Int16;
  else if (s == "ushort" || s == "uint16") t = PlyType::UInt16;
  else if (s == "int" || s == "int32") t = PlyType::Int32;
  else if (s == "uint" || s == "uint32") t = PlyType::UInt32;
  else if (s == "float" || s == "float32") t = PlyType::Float32;
  else if (s == "double" || s == "float64") t = PlyType::Float64;
  else return false;
  return true;
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8: case PlyType::UInt8: return 1;
    case PlyType::Int16: case PlyType::UInt16: return 2;
    case PlyType::Int32: case PlyType::UInt32: case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::uint64_t count = 0;
  std::vector<PlyProperty> properties;
};

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double decode_binary(PlyType t, const char* p) {
  switch (t) {
    case PlyType::Int8: return load_le<std::int8_t>(p);
    case PlyType::UInt8: return load_le<std::uint8_t>(p);
    case PlyType::Int16: return load_le<std::int16_t>(p);
    case PlyType::UInt16: return load_le<std::uint16_t>(p);
    case PlyType::Int32: return load_le<std::int32_t>(p);
    case PlyType::UInt32: return load_le<std::uint32_t>(p);
    case PlyType::Float32: return load_le<float>(p);
    case PlyType::Float64: return load_le<double>(p);
  }
  return 0.0;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

/// Cursor over newline-terminated lines that tracks 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::string_view data) : data_(data) {}

  bool next(std::string_view& line) {
    if (pos_ >= data_.size()) return false;
    const std::size_t nl = data_.find('\n', pos_);
    const std::size_t end = nl == std::string_view::npos ? data_.size() : nl;
    line = data_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = nl == std::string_view::npos ? data_.size() : nl + 1;
    ++line_no_;
    return true;
  }

  std::size_t line_no() const { return line_no_; }
  std::size_t offset() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

inline bool parse_number(std::string_view tok, double& v) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  return ec == std::errc() && ptr == last;
}

inline bool parse_count(std::string_view tok, std::uint64_t& v) {
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

}  // namespace detail

/// Parses PLY bytes (ASCII or binary little-endian). Only the vertex x/y/z
/// properties are kept; other properties and elements are skipped.
inline PointCloud parse_ply(std::string_view data) {
  using namespace detail;
  LineReader lines(data);
  std::string_view line;
  auto header_error = [&](const std::string& what) {
    return Error(ErrorCode::ParseError,
                 "line " + std::to_string(lines.line_no()) + ": " + what);
  };

  if (!lines.next(line) || line != "ply") throw header_error("missing 'ply' magic");
  PlyFormat format = PlyFormat::Ascii;
  bool have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    if (!lines.next(line)) throw header_error("header ends without end_header");
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() != 3) throw header_error("malformed format line");
      if (tok[1] == "ascii") format = PlyFormat::Ascii;
      else if (tok[1] == "binary_little_endian") format = PlyFormat::BinaryLittleEndian;
      else if (tok[1] == "binary_big_endian")
        throw Error(ErrorCode::UnsupportedFormat, "big-endian PLY is not supported");
      else throw header_error("unknown format '" + std::string(tok[1]) + "'");
      have_format = true;
    } else if (tok[0] == "element") {
      PlyElement e;
      if (tok.size() != 3 || !parse_count(tok[2], e.count)) throw header_error("malformed element line");
      e.name = std::string(tok[1]);
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) throw header_error("property before any element");
      PlyProperty p;
      if (tok.size() == 3) {
        if (!parse_ply_type(tok[1], p.type)) throw header_error("unknown property type");
        p.name = std::string(tok[2]);
      } else if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        if (!parse_ply_type(tok[2], p.count_type) || !parse_ply_type(tok[3], p.type)) {
          throw header_error("unknown list property type");
        }
        p.name = std::string(tok[4]);
      } else {
        throw header_error("malformed property line");
      }
      elements.back().properties.push_back(std::move(p));
    } else {
      throw header_error("unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!have_format) throw header_error("missing format line");

  const PlyElement* vertex = nullptr;
  int ix = -1, iy = -1, iz = -1;
  for (const auto& e : elements) {
    if (e.name != "vertex") continue;
    vertex = &e;
    for (int i = 0; i < static_cast<int>(e.properties.size()); ++i) {
      const auto& p = e.properties[i];
      if (p.is_list) continue;
      if (p.name == "x") ix = i;
      if (p.name == "y") iy = i;
      if (p.name == "z") iz = i;
    }
    break;
  }
  if (!vertex) throw Error(ErrorCode::ParseError, "no vertex element");
  if (ix < 0 || iy < 0 || iz < 0) {
    throw Error(ErrorCode::ParseError, "vertex element lacks x/y/z properties");
  }

  std::vector<Point3> points;
  const std::size_t body = lines.offset();
  points.reserve(static_cast<std::size_t>(
      std::min<std::uint64_t>(vertex->count, (data.size() - body) / 3 + 1)));

  if (format == PlyFormat::Ascii) {
    for (const auto& e : elements) {
      for (std::uint64_t n = 0; n < e.count; ++n) {
        if (!lines.next(line)) {
          throw Error(ErrorCode::ParseError, "line " + std::to_string(lines.line_no() + 1) +
                                                 ": unexpected end of data in element '" +
                                                 e.name + "'");
        }
        const auto tok = split_ws(line);
        auto fail = [&](const std::string& what) {
          return Error(ErrorCode::ParseError,
                       "line " + std::to_string(lines.line_no()) + ": " + what);
        };
        std::size_t t = 0;
        double xyz[3] = {0, 0, 0};
        for (int pi = 0; pi < static_cast<int>(e.properties.size()); ++pi) {
          const auto& p = e.properties[pi];
          std::uint64_t items = 1;
          if (p.is_list) {
            double cnt = 0;
            if (t >= tok.size() || !parse_number(tok[t], cnt) || !(cnt >= 0.0) ||
                cnt > 1e15 || cnt != std::floor(cnt)) {
              throw fail("bad list count");
            }
            ++t;
            items = static_cast<std::uint64_t>(cnt);
          }
          for (std::uint64_t it = 0; it < items; ++it, ++t) {
            double v = 0;
            if (t >= tok.size()) throw fail("too few values");
            if (!parse_number(tok[t], v)) throw fail("bad number '" + std::string(tok[t]) + "'");
            if (p.type == PlyType::Float32) {
              // Same value a binary file would carry.
              v = std::abs(v) <= std::numeric_limits<float>::max()
                      ? static_cast<double>(static_cast<float>(v))
                      : std::numeric_limits<double>::infinity();
            }
            if (&e == vertex && !p.is_list) {
              if (pi == ix) xyz[0] = v;
              if (pi == iy) xyz[1] = v;
              if (pi == iz) xyz[2] = v;
            }
          }
        }
        if (t != tok.size()) throw fail("too many values");
        if (&e == vertex) {
          const Point3 p(xyz[0], xyz[1], xyz[2]);
          if (!is_finite(p)) throw fail("non-finite coordinate");
          points.push_back(p);
        }
      }
    }
  } else {
    std::size_t off = body;
    auto need = [&](std::size_t bytes) {
      if (data.size() - off < bytes) {
        throw Error(ErrorCode::ParseError,
                    "offset " + std::to_string(off) + ": unexpected end of binary data");
      }
    };
    for (const auto& e : elements) {
      bool fixed = true;
      std::size_t stride = 0;
      for (const auto& p : e.properties) {
        fixed = fixed && !p.is_list;
        stride += ply_type_size(p.type);
      }
      if (e.properties.empty()) continue;
      if (fixed && e.count > (data.size() - off) / stride) {
        throw Error(ErrorCode::ParseError,
                    "offset " + std::to_string(off) + ": element '" + e.name +
                        "' needs more bytes than remain");
      }
      for (std::uint64_t n = 0; n < e.count; ++n) {
        double xyz[3] = {0, 0, 0};
        for (int pi = 0; pi < static_cast<int>(e.properties.size()); ++pi) {
          const auto& p = e.properties[pi];
          if (p.is_list) {
            const std::size_t cs = ply_type_size(p.count_type);
            need(cs);
            const double cnt = decode_binary(p.count_type, data.data() + off);
            if (!(cnt >= 0.0) || cnt > 1e15) {
              throw Error(ErrorCode::ParseError,
                          "offset " + std::to_string(off) + ": invalid list count");
            }
            off += cs;
            const auto items = static_cast<std::size_t>(cnt);
            const std::size_t ts = ply_type_size(p.type);
            if (items > (data.size() - off) / ts) need(data.size() - off + 1);
            off += items * ts;
            continue;
          }
          const std::size_t ts = ply_type_size(p.type);
          need(ts);
          const double v = decode_binary(p.type, data.data() + off);
          if (&e == vertex) {
            if (pi == ix) xyz[0] = v;
            if (pi == iy) xyz[1] = v;
            if (pi == iz) xyz[2] = v;
          }
          off += ts;
        }
        if (&e == vertex) {
          const Point3 p(xyz[0], xyz[1], xyz[2]);
          if (!is_finite(p)) {
            throw Error(ErrorCode::ParseError,
                        "offset " + std::to_string(off) + ": non-finite coordinate");
          }
          points.push_back(p);
        }
      }
    }
  }
  return PointCloud(std::move(points));
}

inline PointCloud load_ply(const std::filesystem::path& path) {
  return parse_ply(read_file(path));
}

/// Serializes x/y/z vertices. Float64 with either format round-trips bitwise.
inline std::string format_ply(const PointCloud& cloud, PlyFormat format = PlyFormat::BinaryLittleEndian,
                              PlyScalar scalar = PlyScalar::Float64) {
  const char* type = scalar == PlyScalar::Float64 ? "double" : "float";
  std::ostringstream os;
  os << "ply\n"
     << "format " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
     << "comment units meters\n"
     << "element vertex " << cloud.size() << "\n"
     << "property " << type << " x\n"
     << "property " << type << " y\n"
     << "property " << type << " z\n"
     << "end_header\n";
  std::string out = os.str();
  if (format == PlyFormat::Ascii) {
    char buf[32];
    for (const auto& p : cloud) {
      for (int a = 0; a < 3; ++a) {
        const auto res = scalar == PlyScalar::Float64
                             ? std::to_chars(buf, buf + sizeof(buf), p(a))
                             : std::to_chars(buf, buf + sizeof(buf), static_cast<float>(p(a)));
        out.append(buf, res.ptr);
        out.push_back(a == 2 ? '\n' : ' ');
      }
    }
  } else {
    for (const auto& p : cloud) {
      for (int a = 0; a < 3; ++a) {
        if (scalar == PlyScalar::Float64) {
          const double v = p(a);
          out.append(reinterpret_cast<const char*>(&v), sizeof v);
        } else {
          const float v = static_cast<float>(p(a));
          out.append(reinterpret_cast<const char*>(&v), sizeof v);
        }
      }
    }
  }
  return out;
}

inline void save_ply(const PointCloud& cloud, const std::filesystem::path& path,
                     PlyFormat format = PlyFormat::BinaryLittleEndian,
                     PlyScalar scalar = PlyScalar::Float64) {
  write_file(path, format_ply(cloud, format, scalar));
}

}  // namespace keyvote3d::io
