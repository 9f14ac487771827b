#pragma once

#include <nlohmann/json.hpp>

#include <Eigen/SVD>

#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/io/ply.hpp"

namespace keyvote3d::io {

/// Stored rotations further than this from SO(3) are rejected.
inline constexpr double kPoseLoadTolerance = 1e-6;

inline nlohmann::json parse_json(std::string_view text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

template <typename Fn>
auto with_json_errors(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline std::vector<double> finite_array(const nlohmann::json& j, std::size_t n,
                                        const char* what) {
  if (!j.is_array() || j.size() != n) {
    throw Error(ErrorCode::ParseError,
                std::string(what) + " must be an array of " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorCode::ParseError, std::string(what) + " holds a non-number");
    out.push_back(v.get<double>());
    if (!std::isfinite(out.back())) throw Error(ErrorCode::ParseError, std::string(what) + " is not finite");
  }
  return out;
}

// Pose: {"rotation": [9 numbers, row-major], "translation": [3 numbers, m]}

inline nlohmann::json pose_to_json(const RigidTransform& t) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation()(r, c));
  const auto& tr = t.translation();
  return {{"rotation", rot}, {"translation", {tr.x(), tr.y(), tr.z()}}, {"units", "meters"}};
}

/// Rotations within kPoseLoadTolerance of SO(3) are projected onto it; the
/// projection is skipped when already orthonormal to 1e-12 so exact inputs
/// round-trip unchanged.
inline RigidTransform pose_from_json(const nlohmann::json& j) {
  return with_json_errors([&] {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "pose must be a JSON object");
    const auto r = finite_array(j.at("rotation"), 9, "rotation");
    const auto t = finite_array(j.at("translation"), 3, "translation");
    Matrix3 rot;
    for (int i = 0; i < 9; ++i) rot(i / 3, i % 3) = r[i];
    const double dev = (rot.transpose() * rot - Matrix3::Identity()).cwiseAbs().maxCoeff();
    const double det = rot.determinant();
    if (dev > kPoseLoadTolerance || std::abs(det - 1.0) > kPoseLoadTolerance) {
      throw Error(ErrorCode::NotARotation,
                  "rotation deviates from SO(3) (orthonormality error " + std::to_string(dev) +
                      ", det " + std::to_string(det) + ")");
    }
    if (dev > 1e-12 || std::abs(det - 1.0) > 1e-12) {
      Eigen::JacobiSVD<Matrix3> svd(rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
      rot = svd.matrixU() * svd.matrixV().transpose();
    }
    return RigidTransform(rot, Eigen::Vector3d(t[0], t[1], t[2]));
  });
}

inline RigidTransform parse_pose(std::string_view text) { return pose_from_json(parse_json(text)); }

inline void save_pose(const RigidTransform& t, const std::filesystem::path& path) {
  write_file(path, pose_to_json(t).dump(2) + "\n");
}

inline RigidTransform load_pose(const std::filesystem::path& path) {
  return parse_pose(read_file(path));
}

// Keypoints: {"keypoints": [[x, y, z], ...], "fps_count": n, "center_index": i}

inline nlohmann::json keypoints_to_json(const ModelKeypoints& kp, std::size_t fps_count) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : kp) pts.push_back({p.x(), p.y(), p.z()});
  nlohmann::json j = {{"keypoints", pts},
                      {"fps_count", fps_count},
                      {"units", "meters"},
                      {"min_pairwise_distance_m", kp.min_pairwise_distance()}};
  if (fps_count < kp.size()) j["center_index"] = fps_count;
  return j;
}

inline ModelKeypoints keypoints_from_json(const nlohmann::json& j) {
  return with_json_errors([&] {
    const auto& arr = j.is_array() ? j : j.at("keypoints");
    if (!arr.is_array() || arr.empty()) throw Error(ErrorCode::ParseError, "keypoints must be a non-empty array");
    std::vector<Point3> pts;
    for (const auto& e : arr) {
      const auto v = finite_array(e, 3, "keypoint");
      pts.emplace_back(v[0], v[1], v[2]);
    }
    return ModelKeypoints(std::move(pts));
  });
}

inline ModelKeypoints load_keypoints(const std::filesystem::path& path) {
  return keypoints_from_json(parse_json(read_file(path)));
}

}  // namespace keyvote3d::io
