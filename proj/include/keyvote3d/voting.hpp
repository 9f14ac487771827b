#pragma once

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <limits>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/parallel.hpp"
#include "keyvote3d/random.hpp"
#include "keyvote3d/vote_field.hpp"

namespace keyvote3d {

struct VotingConfig {
  /// Number of triplet hypotheses per keypoint (not fixed by the method; repo default).
  std::size_t m_hypotheses = 128;
  /// Inlier cosine threshold.
  double theta = 0.999;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (m_hypotheses < 1) {
      throw Error(ErrorCode::InvalidArgument, "m_hypotheses must be >= 1");
    }
    if (!(theta > 0.0 && theta <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "theta must lie in (0, 1]");
    }
  }
};

struct KeypointEstimate {
  Point3 position = Point3::Zero();
  std::size_t confidence = 0;
};

/// Lines whose normal-equation matrix has a condition number above this are
/// rejected as parallel.
inline constexpr double kMaxLineConditionNumber = 1e8;
/// Points closer than this to a hypothesis cast no vote.
inline constexpr double kCoincidentPointDistance = 1e-9;
/// Rounding slack on the cosine comparison; makes theta = 1 reachable.
inline constexpr double kCosineSlack = 1e-12;

namespace detail {

struct LineSystem {
  Matrix3 a = Matrix3::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
};

inline LineSystem accumulate_lines(std::span<const Point3> points,
                                   std::span<const UnitVec3> directions) {
  LineSystem sys;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3d& v = directions[i].vec();
    const Matrix3 proj = Matrix3::Identity() - v * v.transpose();
    sys.a += proj;
    sys.b += proj * points[i];
  }
  return sys;
}

inline double condition_number(const Eigen::SelfAdjointEigenSolver<Matrix3>& eig) {
  const auto& ev = eig.eigenvalues();  // ascending
  if (!(ev(0) > 0.0)) return std::numeric_limits<double>::infinity();
  return ev(2) / ev(0);
}

}  // namespace detail

/// Condition number of sum_i (I - v_i v_i^T); infinite when singular.
inline double lines_condition_number(std::span<const UnitVec3> directions) {
  Matrix3 a = Matrix3::Zero();
  for (const auto& d : directions) a += Matrix3::Identity() - d.vec() * d.vec().transpose();
  return detail::condition_number(Eigen::SelfAdjointEigenSolver<Matrix3>(a));
}

/// Least-squares point closest to the lines {p_i + s v_i}.
inline Point3 closest_point_to_lines(std::span<const Point3> points,
                                     std::span<const UnitVec3> directions) {
  if (points.size() != directions.size()) {
    throw Error(ErrorCode::ShapeMismatch, "points and directions differ in length");
  }
  if (points.size() < 2) {
    throw Error(ErrorCode::InsufficientPoints, "need at least two lines");
  }
  const auto sys = detail::accumulate_lines(points, directions);
  const Eigen::SelfAdjointEigenSolver<Matrix3> eig(sys.a);
  const double cond = detail::condition_number(eig);
  if (!(cond <= kMaxLineConditionNumber)) {
    throw Error(ErrorCode::DegenerateLines,
                "lines are near-parallel (condition number " + std::to_string(cond) + ")");
  }
  const Matrix3& v = eig.eigenvectors();
  const Eigen::Vector3d coeffs = (v.transpose() * sys.b).cwiseQuotient(eig.eigenvalues());
  return v * coeffs;
}

/// Number of scene points whose direction toward h agrees with their predicted
/// vector for keypoint `keypoint_index` to within acos(theta).
inline std::size_t score_hypothesis(const Point3& h, const VoteField& field,
                                    std::size_t keypoint_index, double theta) {
  if (keypoint_index >= field.num_keypoints()) {
    throw Error(ErrorCode::InvalidArgument, "keypoint index out of range");
  }
  const double threshold = theta - kCosineSlack;
  std::size_t votes = 0;
  for (std::size_t i = 0; i < field.num_points(); ++i) {
    const Eigen::Vector3d d = h - field.point(i);
    const double dist = d.norm();
    if (dist < kCoincidentPointDistance) continue;
    if ((d / dist).dot(field.vector(i, keypoint_index).vec()) >= threshold) ++votes;
  }
  return votes;
}

/// Three distinct indices in [0, n) drawn from the (seed, iteration) stream.
inline std::array<std::size_t, 3> draw_triplet(std::size_t n, std::uint64_t seed,
                                               std::size_t iteration) {
  SplitMix64 rng = make_stream(seed, iteration);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::array<std::size_t, 3> t{};
  t[0] = pick(rng);
  do { t[1] = pick(rng); } while (t[1] == t[0]);
  do { t[2] = pick(rng); } while (t[2] == t[0] || t[2] == t[1]);
  return t;
}

/// RANSAC triangulation of one keypoint: best-scoring triplet hypothesis out
/// of cfg.m_hypotheses draws. Degenerate triplets are skipped; ties keep the
/// earliest iteration.
inline KeypointEstimate vote_keypoint(const VoteField& field, std::size_t keypoint_index,
                                      const VotingConfig& cfg) {
  cfg.validate();
  if (field.num_points() < 3) {
    throw Error(ErrorCode::InsufficientPoints, "voting needs at least 3 scene points");
  }
  if (keypoint_index >= field.num_keypoints()) {
    throw Error(ErrorCode::InvalidArgument, "keypoint index out of range");
  }

  std::optional<KeypointEstimate> best;
  std::array<Point3, 3> pts;
  std::array<UnitVec3, 3> dirs;
  for (std::size_t it = 0; it < cfg.m_hypotheses; ++it) {
    const auto triplet = draw_triplet(field.num_points(), cfg.rng_seed, it);
    for (std::size_t j = 0; j < 3; ++j) {
      pts[j] = field.point(triplet[j]);
      dirs[j] = field.vector(triplet[j], keypoint_index);
    }
    Point3 h;
    try {
      h = closest_point_to_lines(pts, dirs);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegenerateLines) continue;
      throw;
    }
    const std::size_t votes = score_hypothesis(h, field, keypoint_index, cfg.theta);
    if (!best || votes > best->confidence) best = KeypointEstimate{h, votes};
  }
  if (!best) {
    throw Error(ErrorCode::AllHypothesesDegenerate,
                "all " + std::to_string(cfg.m_hypotheses) + " triplets were degenerate");
  }
  return *best;
}

/// Votes every keypoint. Keypoint k uses seed derive_seed(cfg.rng_seed, k), so
/// the result does not depend on `threads`. Errors carry the keypoint index.
inline std::vector<KeypointEstimate> vote_all_keypoints(const VoteField& field,
                                                        const VotingConfig& cfg,
                                                        std::size_t threads = 1) {
  cfg.validate();
  const std::size_t kk = field.num_keypoints();
  std::vector<KeypointEstimate> out(kk);
  parallel_for(kk, threads, [&](std::size_t k) {
    VotingConfig local = cfg;
    local.rng_seed = derive_seed(cfg.rng_seed, k);
    try {
      out[k] = vote_keypoint(field, k, local);
    } catch (const Error& e) {
      throw Error(e.code(), e.detail(), static_cast<int>(k));
    }
  });
  return out;
}

}  // namespace keyvote3d
