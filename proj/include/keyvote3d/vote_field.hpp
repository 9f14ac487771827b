#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/parallel.hpp"
#include "keyvote3d/random.hpp"

namespace keyvote3d {

/// Dense per-point directions: for each of N scene points, one unit vector
/// toward each of K keypoints. Stored row-major by point, then keypoint.
class VoteField {
 public:
  VoteField() = default;

  VoteField(PointCloud scene_points, std::size_t num_keypoints,
            std::vector<UnitVec3> vectors)
      : scene_points_(std::move(scene_points)),
        num_keypoints_(num_keypoints),
        vectors_(std::move(vectors)) {
    if (num_keypoints_ == 0) {
      throw Error(ErrorCode::InvalidArgument, "vote field needs K >= 1");
    }
    if (vectors_.size() != scene_points_.size() * num_keypoints_) {
      throw Error(ErrorCode::ShapeMismatch,
                  "expected " + std::to_string(scene_points_.size()) + "x" +
                      std::to_string(num_keypoints_) + " vectors, got " +
                      std::to_string(vectors_.size()));
    }
  }

  std::size_t num_points() const { return scene_points_.size(); }
  std::size_t num_keypoints() const { return num_keypoints_; }
  const PointCloud& scene_points() const { return scene_points_; }
  const Point3& point(std::size_t i) const { return scene_points_[i]; }
  const UnitVec3& vector(std::size_t i, std::size_t k) const {
    return vectors_[i * num_keypoints_ + k];
  }
  std::span<const UnitVec3> vectors() const { return vectors_; }

  /// Field restricted to the given rows, in the given order.
  VoteField select_rows(std::span<const std::size_t> rows) const {
    std::vector<Point3> pts;
    std::vector<UnitVec3> vecs;
    pts.reserve(rows.size());
    vecs.reserve(rows.size() * num_keypoints_);
    for (std::size_t r : rows) {
      pts.push_back(point(r));
      for (std::size_t k = 0; k < num_keypoints_; ++k) vecs.push_back(vector(r, k));
    }
    return VoteField(PointCloud(std::move(pts)), num_keypoints_, std::move(vecs));
  }

  friend bool operator==(const VoteField&, const VoteField&) = default;

 private:
  PointCloud scene_points_;
  std::size_t num_keypoints_ = 0;
  std::vector<UnitVec3> vectors_;
};

/// Exact field: each vector points from the scene point toward the keypoint.
inline VoteField ground_truth_vectors(const PointCloud& scene_points,
                                      const ModelKeypoints& keypoints_scene) {
  std::vector<UnitVec3> vecs;
  vecs.reserve(scene_points.size() * keypoints_scene.size());
  for (std::size_t i = 0; i < scene_points.size(); ++i) {
    for (std::size_t k = 0; k < keypoints_scene.size(); ++k) {
      const Eigen::Vector3d d = keypoints_scene[k] - scene_points[i];
      if (d.norm() <= 1e-12) {
        throw Error(ErrorCode::DegenerateGeometry,
                    "scene point " + std::to_string(i) + " coincides with keypoint " +
                        std::to_string(k));
      }
      vecs.push_back(UnitVec3::normalized(d));
    }
  }
  return VoteField(scene_points, keypoints_scene.size(), std::move(vecs));
}

inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

/// Sum over points, keypoints and axes of smooth_l1(predicted - ground truth).
inline double vote_field_loss(const VoteField& predicted, const VoteField& ground_truth) {
  if (predicted.num_points() != ground_truth.num_points() ||
      predicted.num_keypoints() != ground_truth.num_keypoints()) {
    throw Error(ErrorCode::ShapeMismatch, "vote fields differ in N or K");
  }
  for (std::size_t i = 0; i < predicted.num_points(); ++i) {
    if ((predicted.point(i) - ground_truth.point(i)).cwiseAbs().maxCoeff() > 1e-12) {
      throw Error(ErrorCode::ShapeMismatch,
                  "scene point " + std::to_string(i) + " differs between fields");
    }
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < predicted.vectors().size(); ++i) {
    const Eigen::Vector3d d = predicted.vectors()[i].vec() - ground_truth.vectors()[i].vec();
    loss += smooth_l1(d.x()) + smooth_l1(d.y()) + smooth_l1(d.z());
  }
  return loss;
}

namespace detail {

inline UnitVec3 random_unit(SplitMix64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    const Eigen::Vector3d v(gauss(rng), gauss(rng), gauss(rng));
    if (v.norm() > 1e-12) return UnitVec3::normalized(v);
  }
}

/// Two unit vectors completing v to a right-handed orthonormal basis.
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> orthonormal_complement(
    const Eigen::Vector3d& v) {
  const Eigen::Vector3d helper =
      std::abs(v.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d e1 = v.cross(helper).normalized();
  return {e1, v.cross(e1)};
}

}  // namespace detail

/// Corrupts a field with half-normal angular noise and uniform-sphere
/// outliers. Cell (i, k) draws from its own stream keyed by (seed, i, k).
inline VoteField perturb(const VoteField& field, double angular_noise_deg,
                         double outlier_fraction, std::uint64_t seed,
                         std::size_t threads = 1) {
  if (!(angular_noise_deg >= 0.0) || !std::isfinite(angular_noise_deg)) {
    throw Error(ErrorCode::InvalidArgument, "angular noise must be >= 0");
  }
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "outlier fraction must be in [0, 1]");
  }
  const std::size_t n = field.num_points();
  const std::size_t kk = field.num_keypoints();
  std::vector<UnitVec3> out(field.vectors().begin(), field.vectors().end());
  const double sigma = angular_noise_deg * std::numbers::pi / 180.0;

  parallel_for(n, threads, [&](std::size_t i) {
    for (std::size_t k = 0; k < kk; ++k) {
      SplitMix64 rng = make_stream(seed, i, k);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      UnitVec3& cell = out[i * kk + k];
      if (outlier_fraction > 0.0 && unit(rng) < outlier_fraction) {
        cell = detail::random_unit(rng);
        continue;
      }
      if (sigma > 0.0) {
        std::normal_distribution<double> gauss(0.0, sigma);
        const double angle = std::abs(gauss(rng));
        const double phi = 2.0 * std::numbers::pi * unit(rng);
        const auto [e1, e2] = detail::orthonormal_complement(cell.vec());
        const Eigen::Vector3d axis = std::cos(phi) * e1 + std::sin(phi) * e2;
        cell = UnitVec3::normalized(Eigen::AngleAxisd(angle, axis) * cell.vec());
      }
    }
  });
  return VoteField(field.scene_points(), kk, std::move(out));
}

}  // namespace keyvote3d
