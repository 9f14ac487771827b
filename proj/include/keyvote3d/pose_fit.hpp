#pragma once

#include <Eigen/SVD>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/parallel.hpp"
#include "keyvote3d/voting.hpp"

namespace keyvote3d {

/// Paired model/scene points with non-negative weights.
struct Correspondences {
  std::vector<Point3> model_points;
  std::vector<Point3> scene_points;
  std::vector<double> weights;

  void validate() const {
    if (model_points.size() != scene_points.size() ||
        model_points.size() != weights.size()) {
      throw Error(ErrorCode::ShapeMismatch, "correspondence arrays differ in length");
    }
    std::size_t positive = 0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorCode::InvalidArgument, "weights must be finite and >= 0");
      }
      if (w > 0.0) ++positive;
    }
    if (positive < 3) {
      throw Error(ErrorCode::InsufficientWeight,
                  "need at least 3 positive weights, got " + std::to_string(positive));
    }
  }
};

/// Weighted sum of squared residuals of (R m + t) against s.
inline double weighted_objective(const Correspondences& c, const RigidTransform& t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < c.weights.size(); ++i) {
    if (c.weights[i] > 0.0) {
      sum += c.weights[i] * ((t * c.model_points[i]) - c.scene_points[i]).squaredNorm();
    }
  }
  return sum;
}

/// Closed-form weighted Procrustes: minimizes sum_k w_k |R m_k + t - s_k|^2
/// with det(R) = +1. Zero-weight entries are dropped before any arithmetic.
inline RigidTransform weighted_rigid_fit(const Correspondences& c) {
  c.validate();

  double wsum = 0.0;
  Point3 cm = Point3::Zero();
  Point3 cs = Point3::Zero();
  for (std::size_t i = 0; i < c.weights.size(); ++i) {
    const double w = c.weights[i];
    if (w <= 0.0) continue;
    if (!is_finite(c.model_points[i]) || !is_finite(c.scene_points[i])) {
      throw Error(ErrorCode::InvalidArgument, "non-finite correspondence");
    }
    wsum += w;
    cm += w * c.model_points[i];
    cs += w * c.scene_points[i];
  }
  cm /= wsum;
  cs /= wsum;

  Matrix3 cross = Matrix3::Zero();
  Matrix3 scatter = Matrix3::Zero();
  for (std::size_t i = 0; i < c.weights.size(); ++i) {
    const double w = c.weights[i];
    if (w <= 0.0) continue;
    const Eigen::Vector3d dm = c.model_points[i] - cm;
    const Eigen::Vector3d ds = c.scene_points[i] - cs;
    cross += w * ds * dm.transpose();
    scatter += w * dm * dm.transpose();
  }

  // Collinear model points leave rotation about their common axis free.
  const Eigen::JacobiSVD<Matrix3> model_svd(scatter);
  const auto& sv = model_svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw Error(ErrorCode::DegenerateCorrespondences,
                "model points are collinear or coincident");
  }

  const Eigen::JacobiSVD<Matrix3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix3& u = svd.matrixU();
  const Matrix3& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  const Matrix3 r = u * d.asDiagonal() * v.transpose();
  return RigidTransform(r, cs - r * cm);
}

/// Pose from voted keypoints, weighted by vote counts.
inline RigidTransform fit_from_votes(std::span<const KeypointEstimate> estimates,
                                     const ModelKeypoints& model_kp) {
  if (estimates.size() != model_kp.size()) {
    throw Error(ErrorCode::ShapeMismatch, "estimate count differs from keypoint count");
  }
  Correspondences c;
  bool any = false;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    c.model_points.push_back(model_kp[k]);
    c.scene_points.push_back(estimates[k].position);
    c.weights.push_back(static_cast<double>(estimates[k].confidence));
    any = any || estimates[k].confidence > 0;
  }
  if (!any) {
    throw Error(ErrorCode::AllZeroConfidence, "every keypoint has zero confidence");
  }
  return weighted_rigid_fit(c);
}

struct IcpResult {
  RigidTransform transform;
  /// Mean squared distance of matched pairs at the initial and returned pose.
  double initial_objective = std::numeric_limits<double>::infinity();
  double objective = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
  /// Set when some iterate had no pair within max_corr_dist.
  bool no_correspondences = false;
};

namespace detail {

struct Matches {
  std::vector<Point3> source;  // transformed model points
  std::vector<Point3> target;  // nearest scene points
  double mean_sq = std::numeric_limits<double>::infinity();
};

inline Matches match_nearest(const RigidTransform& t, const PointCloud& scene,
                             const PointCloud& model, double max_corr_dist,
                             std::size_t threads) {
  const double max_sq = max_corr_dist * max_corr_dist;
  std::vector<std::size_t> nearest(model.size());
  std::vector<double> nearest_sq(model.size());
  parallel_for(model.size(), threads, [&](std::size_t j) {
    const Point3 p = t * model[j];
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      const double d = (scene[i] - p).squaredNorm();
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    nearest[j] = arg;
    nearest_sq[j] = best;
  });

  Matches m;
  double sum = 0.0;
  for (std::size_t j = 0; j < model.size(); ++j) {
    if (nearest_sq[j] < max_sq) {
      m.source.push_back(t * model[j]);
      m.target.push_back(scene[nearest[j]]);
      sum += nearest_sq[j];
    }
  }
  if (!m.source.empty()) m.mean_sq = sum / static_cast<double>(m.source.size());
  return m;
}

}  // namespace detail

/// Point-to-point ICP from `initial`, matching each transformed model point to
/// its nearest scene point closer than max_corr_dist. A step is accepted only
/// if it does not increase the objective; the result is never worse than
/// `initial`.
inline IcpResult icp_refine(const RigidTransform& initial, const PointCloud& scene,
                            const PointCloud& model, std::size_t iters,
                            double max_corr_dist, std::size_t threads = 1) {
  if (scene.empty() || model.empty()) {
    throw Error(ErrorCode::InsufficientPoints, "ICP needs non-empty clouds");
  }
  if (iters == 0) throw Error(ErrorCode::InvalidArgument, "iters must be >= 1");
  if (!(max_corr_dist >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "max_corr_dist must be >= 0");
  }

  IcpResult result;
  result.transform = initial;
  detail::Matches matches =
      detail::match_nearest(initial, scene, model, max_corr_dist, threads);
  if (matches.source.empty()) {
    result.no_correspondences = true;
    return result;
  }
  result.initial_objective = matches.mean_sq;
  result.objective = matches.mean_sq;

  for (std::size_t it = 0; it < iters; ++it) {
    if (matches.source.size() < 3) break;
    Correspondences c{matches.source, matches.target,
                      std::vector<double>(matches.source.size(), 1.0)};
    RigidTransform delta;
    try {
      delta = weighted_rigid_fit(c);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegenerateCorrespondences) break;
      throw;
    }
    const RigidTransform candidate = compose(delta, result.transform);
    detail::Matches next =
        detail::match_nearest(candidate, scene, model, max_corr_dist, threads);
    if (next.source.empty()) {
      result.no_correspondences = true;
      break;
    }
    if (next.mean_sq > result.objective) break;

    result.transform = candidate;
    result.objective = next.mean_sq;
    result.iterations = it + 1;
    matches = std::move(next);
    if (delta.translation().norm() < 1e-7 && delta.angle() < 1e-6) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace keyvote3d
