#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/parallel.hpp"

namespace keyvote3d {

/// Mean distance between each model point under the ground-truth pose and the
/// same point under the predicted pose.
inline double add_metric(const PointCloud& model, const RigidTransform& gt,
                         const RigidTransform& pred) {
  if (model.empty()) throw Error(ErrorCode::InsufficientPoints, "empty model");
  double sum = 0.0;
  for (const auto& x : model) sum += ((gt * x) - (pred * x)).norm();
  return sum / static_cast<double>(model.size());
}

/// Symmetric variant: each predicted point is charged the distance to the
/// closest ground-truth-transformed model point. Brute force, O(N^2).
inline double adds_metric(const PointCloud& model, const RigidTransform& gt,
                          const RigidTransform& pred, std::size_t threads = 1) {
  if (model.empty()) throw Error(ErrorCode::InsufficientPoints, "empty model");
  std::vector<Point3> gt_points;
  gt_points.reserve(model.size());
  for (const auto& x : model) gt_points.push_back(gt * x);

  std::vector<double> nearest(model.size());
  parallel_for(model.size(), threads, [&](std::size_t j) {
    const Point3 p = pred * model[j];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : gt_points) best = std::min(best, (q - p).squaredNorm());
    nearest[j] = std::sqrt(best);
  });
  double sum = 0.0;
  for (double d : nearest) sum += d;
  return sum / static_cast<double>(model.size());
}

enum class MetricKind { ADD, ADD_S };

constexpr const char* to_string(MetricKind k) {
  return k == MetricKind::ADD ? "ADD" : "ADD_S";
}

struct EvalInstance {
  std::shared_ptr<const PointCloud> model;
  RigidTransform gt;
  RigidTransform pred;
  bool symmetric = false;
};

struct InstanceResult {
  double add_distance = 0.0;
  MetricKind metric_kind = MetricKind::ADD;
  double threshold = 0.0;
  bool passed = false;
};

struct EvalReport {
  std::vector<InstanceResult> per_instance;
  double accuracy = 0.0;
  double threshold_fraction = 0.10;
};

/// ADD for non-symmetric instances, ADD-S for symmetric ones; an instance
/// passes when its distance is strictly below diameter_fraction * diameter.
inline EvalReport evaluate(const std::vector<EvalInstance>& instances,
                           double diameter_fraction = 0.10, std::size_t threads = 1) {
  if (!(diameter_fraction > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "diameter_fraction must be > 0");
  }
  EvalReport report;
  report.threshold_fraction = diameter_fraction;
  std::map<const PointCloud*, double> diameters;
  std::size_t passed = 0;
  for (const auto& inst : instances) {
    if (!inst.model) throw Error(ErrorCode::InvalidArgument, "instance without model");
    auto [it, fresh] = diameters.try_emplace(inst.model.get(), 0.0);
    if (fresh) it->second = model_diameter(*inst.model);

    InstanceResult r;
    r.metric_kind = inst.symmetric ? MetricKind::ADD_S : MetricKind::ADD;
    r.add_distance = inst.symmetric ? adds_metric(*inst.model, inst.gt, inst.pred, threads)
                                    : add_metric(*inst.model, inst.gt, inst.pred);
    r.threshold = diameter_fraction * it->second;
    r.passed = r.add_distance < r.threshold;
    passed += r.passed ? 1 : 0;
    report.per_instance.push_back(r);
  }
  if (!instances.empty()) {
    report.accuracy = static_cast<double>(passed) / static_cast<double>(instances.size());
  }
  return report;
}

/// Distances are in meters.
inline nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : report.per_instance) {
    per.push_back({{"add_distance", r.add_distance},
                   {"metric_kind", to_string(r.metric_kind)},
                   {"threshold", r.threshold},
                   {"passed", r.passed}});
  }
  return {{"per_instance", per},
          {"accuracy", report.accuracy},
          {"threshold_fraction", report.threshold_fraction},
          {"units", "meters"}};
}

}  // namespace keyvote3d
