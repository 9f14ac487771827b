#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/random.hpp"

namespace keyvote3d {

/// Points are in meters throughout the library.
using Point3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

inline bool is_finite(const Eigen::Vector3d& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

/// Direction with unit Euclidean norm (within 1e-9).
class UnitVec3 {
 public:
  static constexpr double kNormTolerance = 1e-9;

  UnitVec3() : v_(1.0, 0.0, 0.0) {}

  /// Throws NormViolation unless |v| is 1 within kNormTolerance.
  explicit UnitVec3(const Eigen::Vector3d& v) : v_(v) {
    if (!is_finite(v) || std::abs(v.norm() - 1.0) > kNormTolerance) {
      throw Error(ErrorCode::NormViolation, "vector is not unit length");
    }
  }

  UnitVec3(double x, double y, double z) : UnitVec3(Eigen::Vector3d(x, y, z)) {}

  /// Normalizes v; throws DegenerateGeometry for a zero or non-finite vector.
  static UnitVec3 normalized(const Eigen::Vector3d& v) {
    const double n = v.norm();
    if (!std::isfinite(n) || n < 1e-300) {
      throw Error(ErrorCode::DegenerateGeometry, "cannot normalize zero vector");
    }
    UnitVec3 u;
    u.v_ = v / n;
    return u;
  }

  const Eigen::Vector3d& vec() const { return v_; }
  operator const Eigen::Vector3d&() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  double dot(const Eigen::Vector3d& o) const { return v_.dot(o); }

  friend bool operator==(const UnitVec3& a, const UnitVec3& b) {
    return a.v_ == b.v_;
  }

 private:
  Eigen::Vector3d v_;
};

/// Ordered set of finite 3D points.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(std::vector<Point3> points) : points_(std::move(points)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!is_finite(points_[i])) {
        throw Error(ErrorCode::InvalidArgument,
                    "non-finite point at index " + std::to_string(i));
      }
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point3& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point3> points() const { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  friend bool operator==(const PointCloud& a, const PointCloud& b) {
    return a.points_ == b.points_;
  }

 private:
  std::vector<Point3> points_;
};

/// Proper rigid motion x -> R x + t.
class RigidTransform {
 public:
  static constexpr double kTolerance = 1e-9;

  RigidTransform() : rotation_(Matrix3::Identity()), translation_(Point3::Zero()) {}

  /// Throws NotARotation unless R is orthonormal with det +1 within 1e-9.
  RigidTransform(const Matrix3& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {
    if (!is_rotation(rotation, kTolerance)) {
      throw Error(ErrorCode::NotARotation, "matrix is not in SO(3)");
    }
    if (!is_finite(translation)) {
      throw Error(ErrorCode::InvalidArgument, "non-finite translation");
    }
  }

  static RigidTransform identity() { return {}; }

  static RigidTransform translation_only(const Eigen::Vector3d& t) {
    return RigidTransform(Matrix3::Identity(), t);
  }

  static bool is_rotation(const Matrix3& r, double tol) {
    if (!r.allFinite()) return false;
    const Matrix3 gram = r.transpose() * r;
    if ((gram - Matrix3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(r.determinant() - 1.0) <= tol;
  }

  const Matrix3& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Point3 operator*(const Point3& p) const { return rotation_ * p + translation_; }

  RigidTransform inverse() const {
    const Matrix3 rt = rotation_.transpose();
    RigidTransform inv;
    inv.rotation_ = rt;
    inv.translation_ = -(rt * translation_);
    return inv;
  }

  /// Rotation angle in radians, in [0, pi].
  double angle() const {
    const double c = std::clamp((rotation_.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
  }

  friend bool operator==(const RigidTransform& a, const RigidTransform& b) {
    return a.rotation_ == b.rotation_ && a.translation_ == b.translation_;
  }

 private:
  friend RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

  Matrix3 rotation_;
  Eigen::Vector3d translation_;
};

/// Returns a∘b: the transform that applies b first, then a. The product of
/// two valid rotations is re-projected only if rounding pushes it past the
/// invariant tolerance.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation_ = a.rotation_ * b.rotation_;
  out.translation_ = a.rotation_ * b.translation_ + a.translation_;
  if (!RigidTransform::is_rotation(out.rotation_, RigidTransform::kTolerance)) {
    Eigen::JacobiSVD<Matrix3> svd(out.rotation_,
                                  Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.rotation_ = svd.matrixU() * svd.matrixV().transpose();
  }
  return out;
}

inline RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }

/// Rotation-only difference measured as the Frobenius norm of Ra - Rb.
inline double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.rotation() - b.rotation()).norm();
}

inline double translation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

inline PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
  std::vector<Point3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(t * p);
  return PointCloud(std::move(out));
}

inline Point3 centroid(std::span<const Point3> points) {
  if (points.empty()) {
    throw Error(ErrorCode::InsufficientPoints, "centroid of empty set");
  }
  Point3 sum = Point3::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

inline Point3 centroid(const PointCloud& cloud) { return centroid(cloud.points()); }

/// K keypoints in the model frame, pairwise distinct.
class ModelKeypoints {
 public:
  ModelKeypoints() = default;

  explicit ModelKeypoints(std::vector<Point3> keypoints)
      : keypoints_(std::move(keypoints)) {
    if (keypoints_.empty()) {
      throw Error(ErrorCode::InvalidArgument, "keypoint set is empty");
    }
    for (std::size_t i = 0; i < keypoints_.size(); ++i) {
      if (!is_finite(keypoints_[i])) {
        throw Error(ErrorCode::InvalidArgument, "non-finite keypoint");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if ((keypoints_[i] - keypoints_[j]).norm() <= 0.0) {
          throw Error(ErrorCode::DegenerateGeometry,
                      "keypoints " + std::to_string(j) + " and " +
                          std::to_string(i) + " coincide");
        }
      }
    }
  }

  std::size_t size() const { return keypoints_.size(); }
  const Point3& operator[](std::size_t i) const { return keypoints_[i]; }
  std::span<const Point3> points() const { return keypoints_; }
  auto begin() const { return keypoints_.begin(); }
  auto end() const { return keypoints_.end(); }

  double min_pairwise_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < keypoints_.size(); ++i) {
      for (std::size_t j = i + 1; j < keypoints_.size(); ++j) {
        best = std::min(best, (keypoints_[i] - keypoints_[j]).norm());
      }
    }
    return best;
  }

  friend bool operator==(const ModelKeypoints&, const ModelKeypoints&) = default;

 private:
  std::vector<Point3> keypoints_;
};

inline ModelKeypoints apply_transform(const RigidTransform& t, const ModelKeypoints& kp) {
  std::vector<Point3> out;
  out.reserve(kp.size());
  for (const auto& p : kp) out.push_back(t * p);
  return ModelKeypoints(std::move(out));
}

enum class FpsSeed {
  FarthestFromCentroid,
  FirstIndex,
};

/// Indices chosen by greedy farthest point sampling. Ties go to the lowest
/// input index.
inline std::vector<std::size_t> fps_indices(const PointCloud& model, std::size_t k,
                                            FpsSeed seed = FpsSeed::FarthestFromCentroid) {
  if (k == 0) {
    throw Error(ErrorCode::InvalidArgument, "k must be positive");
  }
  if (model.size() < k) {
    throw Error(ErrorCode::InsufficientPoints,
                "model has " + std::to_string(model.size()) + " points, need " +
                    std::to_string(k));
  }

  std::size_t first = 0;
  if (seed == FpsSeed::FarthestFromCentroid) {
    const Point3 c = centroid(model);
    double best = -1.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
      const double d = (model[i] - c).squaredNorm();
      if (d > best) {
        best = d;
        first = i;
      }
    }
  }

  std::vector<std::size_t> selected{first};
  selected.reserve(k);
  std::vector<double> min_dist(model.size(), std::numeric_limits<double>::infinity());
  while (selected.size() < k) {
    const Point3& last = model[selected.back()];
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
      min_dist[i] = std::min(min_dist[i], (model[i] - last).squaredNorm());
      if (min_dist[i] > best) {
        best = min_dist[i];
        arg = i;
      }
    }
    selected.push_back(arg);
  }
  return selected;
}

/// Throws DegenerateGeometry if the model has fewer than k distinct points.
inline ModelKeypoints fps_keypoints(const PointCloud& model, std::size_t k,
                                    FpsSeed seed = FpsSeed::FarthestFromCentroid) {
  std::vector<Point3> out;
  for (std::size_t i : fps_indices(model, k, seed)) out.push_back(model[i]);
  return ModelKeypoints(std::move(out));
}

/// Maximum pairwise distance. Exact; candidate pairs are visited in order of
/// decreasing centroid radius and pruned with the bound r_i + r_j.
inline double model_diameter(const PointCloud& model) {
  if (model.size() < 2) {
    throw Error(ErrorCode::InsufficientPoints, "diameter needs at least 2 points");
  }
  const Point3 c = centroid(model);
  std::vector<std::pair<double, std::size_t>> by_radius;
  by_radius.reserve(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    by_radius.emplace_back((model[i] - c).norm(), i);
  }
  std::sort(by_radius.begin(), by_radius.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  double best_sq = 0.0;
  for (std::size_t a = 0; a < by_radius.size(); ++a) {
    const double ra = by_radius[a].first;
    // Slack absorbs rounding in the radius bound.
    if (2.0 * ra * (1.0 + 1e-12) + 1e-300 < std::sqrt(best_sq)) break;
    const Point3& pa = model[by_radius[a].second];
    for (std::size_t b = a + 1; b < by_radius.size(); ++b) {
      const double bound = (ra + by_radius[b].first) * (1.0 + 1e-12);
      if (bound * bound < best_sq) break;
      best_sq = std::max(best_sq, (pa - model[by_radius[b].second]).squaredNorm());
    }
  }
  return std::sqrt(best_sq);
}

/// n indices into [0, count). Without replacement when count >= n; otherwise
/// every index once followed by uniform draws with replacement.
inline std::vector<std::size_t> subsample_indices(std::size_t count, std::size_t n,
                                                  std::uint64_t seed) {
  if (count == 0) {
    throw Error(ErrorCode::InsufficientPoints, "cannot subsample an empty set");
  }
  SplitMix64 rng(derive_seed(seed, 0x5ab5));
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t take = std::min(n, count);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, count - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  std::uniform_int_distribution<std::size_t> any(0, count - 1);
  while (idx.size() < n) idx.push_back(any(rng));
  return idx;
}

inline PointCloud subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  std::vector<Point3> out;
  out.reserve(n);
  for (std::size_t i : subsample_indices(cloud.size(), n, seed)) out.push_back(cloud[i]);
  return PointCloud(std::move(out));
}

}  // namespace keyvote3d
