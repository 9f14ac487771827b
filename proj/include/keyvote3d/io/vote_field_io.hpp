#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/io/ply.hpp"
#include "keyvote3d/vote_field.hpp"

namespace keyvote3d::io {

/// Binary vote-field container, all little-endian:
///   char[8] "KV3DVF1\0" | u32 N | u32 K | f32[N*3] points (m) | f32[N*K*3] vectors
/// Vectors are row-major by point, then keypoint.
inline constexpr std::string_view kVoteFieldMagic{"KV3DVF1\0", 8};
inline constexpr std::size_t kVoteFieldHeaderSize = 16;
/// Loaded vectors within this of unit norm are renormalized; others rejected.
inline constexpr double kVoteFieldNormTolerance = 1e-3;

namespace detail {

inline UnitVec3 checked_unit(const Eigen::Vector3d& v, std::size_t point, std::size_t k) {
  const double n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > kVoteFieldNormTolerance) {
    throw Error(ErrorCode::NormViolation,
                "vector (" + std::to_string(point) + ", " + std::to_string(k) +
                    ") has norm " + std::to_string(n));
  }
  return UnitVec3::normalized(v);
}

inline VoteField parse_vote_field_json(std::string_view data) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(data);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  try {
    const auto n = j.at("N").get<std::size_t>();
    const auto k = j.at("K").get<std::size_t>();
    const auto& pts = j.at("scene_points");
    const auto& vecs = j.at("vectors");
    if (k == 0) throw Error(ErrorCode::ParseError, "K must be positive");
    if (!pts.is_array() || pts.size() != n || !vecs.is_array() || vecs.size() != n) {
      throw Error(ErrorCode::ShapeMismatch, "scene_points/vectors do not have N rows");
    }
    std::vector<Point3> points;
    std::vector<UnitVec3> vectors;
    points.reserve(n);
    vectors.reserve(n * k);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = pts[i].get<std::vector<double>>();
      if (p.size() != 3) throw Error(ErrorCode::ParseError, "scene point needs 3 coordinates");
      points.emplace_back(p[0], p[1], p[2]);
      if (!is_finite(points.back())) throw Error(ErrorCode::ParseError, "non-finite scene point");
      if (!vecs[i].is_array() || vecs[i].size() != k) {
        throw Error(ErrorCode::ShapeMismatch, "vector row " + std::to_string(i) + " lacks K entries");
      }
      for (std::size_t kk = 0; kk < k; ++kk) {
        const auto v = vecs[i][kk].get<std::vector<double>>();
        if (v.size() != 3) throw Error(ErrorCode::ParseError, "vector needs 3 components");
        vectors.push_back(checked_unit(Eigen::Vector3d(v[0], v[1], v[2]), i, kk));
      }
    }
    return VoteField(PointCloud(std::move(points)), k, std::move(vectors));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace detail

/// Decodes either the binary container or its JSON mirror (first
/// non-blank byte '{').
inline VoteField parse_vote_field(std::string_view data) {
  const auto first = data.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && data[first] == '{') {
    return detail::parse_vote_field_json(data);
  }
  const std::size_t prefix = std::min(data.size(), kVoteFieldMagic.size());
  if (data.substr(0, prefix) != kVoteFieldMagic.substr(0, prefix)) {
    throw Error(ErrorCode::MagicMismatch, "not a KV3DVF1 vote-field file");
  }
  if (data.size() < kVoteFieldHeaderSize) {
    throw Error(ErrorCode::TruncatedFile, "header is shorter than 16 bytes");
  }
  const auto n = detail::load_le<std::uint32_t>(data.data() + 8);
  const auto k = detail::load_le<std::uint32_t>(data.data() + 12);
  if (k == 0) throw Error(ErrorCode::ParseError, "K must be positive");

  const std::uint64_t payload = data.size() - kVoteFieldHeaderSize;
  const std::uint64_t point_bytes = std::uint64_t{n} * 12;
  const std::uint64_t vector_bytes = std::uint64_t{n} * std::uint64_t{k} * 12;
  if (std::uint64_t{n} * std::uint64_t{k} > payload / 12 || point_bytes > payload ||
      point_bytes + vector_bytes > payload) {
    throw Error(ErrorCode::TruncatedFile,
                "expected " + std::to_string(n) + "x" + std::to_string(k) +
                    " field, file has " + std::to_string(payload) + " payload bytes");
  }
  if (point_bytes + vector_bytes != payload) {
    throw Error(ErrorCode::ParseError, "trailing bytes after vote-field payload");
  }

  const char* p = data.data() + kVoteFieldHeaderSize;
  auto next3 = [&p] {
    Eigen::Vector3d v;
    for (int a = 0; a < 3; ++a, p += 4) v(a) = detail::load_le<float>(p);
    return v;
  };
  std::vector<Point3> points;
  points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    points.push_back(next3());
    if (!is_finite(points.back())) {
      throw Error(ErrorCode::ParseError, "non-finite scene point " + std::to_string(i));
    }
  }
  std::vector<UnitVec3> vectors;
  vectors.reserve(std::size_t{n} * k);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t kk = 0; kk < k; ++kk) vectors.push_back(detail::checked_unit(next3(), i, kk));
  }
  return VoteField(PointCloud(std::move(points)), k, std::move(vectors));
}

inline std::string format_vote_field(const VoteField& field) {
  if (field.num_points() > 0xFFFFFFFFu || field.num_keypoints() > 0xFFFFFFFFu) {
    throw Error(ErrorCode::InvalidArgument, "vote field too large for KV3DVF1");
  }
  std::string out(kVoteFieldMagic);
  auto put_u32 = [&out](std::uint32_t v) {
    out.append(reinterpret_cast<const char*>(&v), 4);
  };
  auto put3 = [&out](const Eigen::Vector3d& v) {
    for (int a = 0; a < 3; ++a) {
      const float f = static_cast<float>(v(a));
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  };
  put_u32(static_cast<std::uint32_t>(field.num_points()));
  put_u32(static_cast<std::uint32_t>(field.num_keypoints()));
  out.reserve(out.size() + field.num_points() * (1 + field.num_keypoints()) * 12);
  for (const auto& p : field.scene_points()) put3(p);
  for (const auto& v : field.vectors()) put3(v.vec());
  return out;
}

/// JSON mirror of the binary container, at double precision.
inline nlohmann::json vote_field_to_json(const VoteField& field) {
  nlohmann::json pts = nlohmann::json::array();
  nlohmann::json vecs = nlohmann::json::array();
  for (std::size_t i = 0; i < field.num_points(); ++i) {
    const auto& p = field.point(i);
    pts.push_back({p.x(), p.y(), p.z()});
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k < field.num_keypoints(); ++k) {
      const auto& v = field.vector(i, k);
      row.push_back({v.x(), v.y(), v.z()});
    }
    vecs.push_back(std::move(row));
  }
  return {{"format", "KV3DVF1"},
          {"units", "meters"},
          {"N", field.num_points()},
          {"K", field.num_keypoints()},
          {"scene_points", std::move(pts)},
          {"vectors", std::move(vecs)}};
}

inline VoteField load_vote_field(const std::filesystem::path& path) {
  return parse_vote_field(read_file(path));
}

inline void save_vote_field(const VoteField& field, const std::filesystem::path& path) {
  write_file(path, format_vote_field(field));
}

inline void save_vote_field_json(const VoteField& field, const std::filesystem::path& path) {
  write_file(path, vote_field_to_json(field).dump(1) + "\n");
}

}  // namespace keyvote3d::io
