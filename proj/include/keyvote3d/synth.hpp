#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "keyvote3d/error.hpp"
#include "keyvote3d/geometry.hpp"
#include "keyvote3d/metrics.hpp"
#include "keyvote3d/parallel.hpp"
#include "keyvote3d/pose_fit.hpp"
#include "keyvote3d/random.hpp"
#include "keyvote3d/vote_field.hpp"
#include "keyvote3d/voting.hpp"

namespace keyvote3d {

enum class PoseSampling { UniformRotation, SmallAngle };

inline const char* to_string(PoseSampling p) {
  return p == PoseSampling::UniformRotation ? "uniform_rotation" : "small_angle";
}

inline PoseSampling pose_sampling_from_string(const std::string& s) {
  if (s == "uniform_rotation") return PoseSampling::UniformRotation;
  if (s == "small_angle") return PoseSampling::SmallAngle;
  throw Error(ErrorCode::InvalidArgument, "unknown pose_sampling '" + s + "'");
}

/// Translation range for sampled poses: uniform in [-half_extent, half_extent]^3
/// plus depth_offset along +z.
struct PoseBox {
  double half_extent = 0.2;
  double depth_offset = 1.0;
};

inline constexpr double kSmallAngleMaxDeg = 15.0;

inline RigidTransform sample_pose(PoseSampling kind, std::uint64_t seed,
                                  const PoseBox& box = {}) {
  SplitMix64 rng = make_stream(seed, 0x9053);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix3 r;
  if (kind == PoseSampling::UniformRotation) {
    Eigen::Vector4d q;
    do {
      q = Eigen::Vector4d(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    } while (q.norm() < 1e-12);
    q.normalize();
    r = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
  } else {
    Eigen::Vector3d axis;
    do {
      axis = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    } while (axis.norm() < 1e-12);
    const double angle = unit(rng) * kSmallAngleMaxDeg * std::numbers::pi / 180.0;
    r = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  }
  std::uniform_real_distribution<double> box_coord(-box.half_extent, box.half_extent);
  Eigen::Vector3d t(box_coord(rng), box_coord(rng), box_coord(rng));
  t.z() += box.depth_offset;
  return RigidTransform(r, t);
}

struct SynthConfig {
  std::size_t n_points = 500;
  /// FPS surface keypoints plus the centroid as the last keypoint.
  std::size_t k_keypoints = 9;
  double angular_noise_deg = 0.0;
  double outlier_fraction = 0.0;
  double occlusion_fraction = 0.0;
  PoseSampling pose_sampling = PoseSampling::UniformRotation;
  std::uint64_t rng_seed = 0;
  PoseBox pose_box{};

  void validate() const {
    if (n_points < 1) throw Error(ErrorCode::InvalidArgument, "n_points must be >= 1");
    if (k_keypoints < 1) throw Error(ErrorCode::InvalidArgument, "k_keypoints must be >= 1");
    if (!(angular_noise_deg >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "angular_noise_deg must be >= 0");
    }
    if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "outlier_fraction must be in [0, 1]");
    }
    if (!(occlusion_fraction >= 0.0 && occlusion_fraction < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "occlusion_fraction must be in [0, 1)");
    }
  }
};

struct SynthScene {
  RigidTransform gt_pose;
  PointCloud scene_points;
  VoteField field;
  ModelKeypoints model_kp;
  /// Visible half-space in the camera frame: points p with dot(normal, p) <= offset.
  Eigen::Vector3d occlusion_normal = Eigen::Vector3d::UnitZ();
  double occlusion_offset = std::numeric_limits<double>::infinity();
  std::size_t visible_count = 0;
};

/// k-1 FPS keypoints followed by the model centroid.
inline ModelKeypoints keypoints_with_center(const PointCloud& model, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<Point3> kps;
  if (k > 1) {
    const ModelKeypoints fps = fps_keypoints(model, k - 1);
    kps.assign(fps.begin(), fps.end());
  }
  kps.push_back(centroid(model));
  return ModelKeypoints(std::move(kps));
}

/// Samples a scene from `model`: random pose, half-space occlusion, spatial
/// subsampling to n_points, exact vote field, then corruption.
inline SynthScene generate(const PointCloud& model, const SynthConfig& cfg) {
  cfg.validate();
  if (model.size() < 3) {
    throw Error(ErrorCode::InsufficientPoints, "model needs at least 3 points");
  }

  SynthScene scene;
  scene.model_kp = keypoints_with_center(model, cfg.k_keypoints);
  scene.gt_pose = sample_pose(cfg.pose_sampling, derive_seed(cfg.rng_seed, 1), cfg.pose_box);
  const ModelKeypoints kp_scene = apply_transform(scene.gt_pose, scene.model_kp);

  // Keypoints picked from the model cloud would otherwise sit on a scene point.
  std::vector<Point3> pool;
  pool.reserve(model.size());
  for (const auto& x : model) {
    const Point3 p = scene.gt_pose * x;
    bool clear = true;
    for (const auto& k : kp_scene) clear = clear && (k - p).norm() > 1e-9;
    if (clear) pool.push_back(p);
  }

  SplitMix64 occ_rng = make_stream(cfg.rng_seed, 2);
  scene.occlusion_normal = detail::random_unit(occ_rng).vec();
  const std::size_t removed = static_cast<std::size_t>(
      std::floor(cfg.occlusion_fraction * static_cast<double>(pool.size())));
  if (removed > 0) {
    std::vector<std::pair<double, std::size_t>> proj;
    proj.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      proj.emplace_back(scene.occlusion_normal.dot(pool[i]), i);
    }
    std::sort(proj.begin(), proj.end());
    std::vector<Point3> visible;
    const std::size_t keep = pool.size() - removed;
    visible.reserve(keep);
    std::vector<std::size_t> kept_idx;
    for (std::size_t i = 0; i < keep; ++i) kept_idx.push_back(proj[i].second);
    std::sort(kept_idx.begin(), kept_idx.end());
    for (std::size_t i : kept_idx) visible.push_back(pool[i]);
    scene.occlusion_offset = keep > 0 ? proj[keep - 1].first : -std::numeric_limits<double>::infinity();
    pool = std::move(visible);
  }
  scene.visible_count = pool.size();
  if (pool.size() < 3) {
    throw Error(ErrorCode::DegenerateScene,
                "only " + std::to_string(pool.size()) + " points survive occlusion");
  }

  scene.scene_points = subsample(PointCloud(std::move(pool)), cfg.n_points,
                                 derive_seed(cfg.rng_seed, 3));
  const VoteField exact = ground_truth_vectors(scene.scene_points, kp_scene);
  scene.field = perturb(exact, cfg.angular_noise_deg, cfg.outlier_fraction,
                        derive_seed(cfg.rng_seed, 4));
  return scene;
}

struct BenchmarkOptions {
  std::size_t trials = 100;
  double diameter_fraction = 0.10;
  std::size_t m_hypotheses = 128;
  double theta = 0.999;
  std::size_t threads = 1;
};

struct BenchmarkRow {
  SynthConfig config;
  std::size_t trials = 0;
  double accuracy = 0.0;
  /// Accuracy of a vote-free predictor: identity rotation, centroids aligned.
  double baseline_accuracy = 0.0;
  std::size_t failures = 0;
  double mean_add = 0.0;
  double mean_runtime = 0.0;
};

struct TrialOutcome {
  bool ok = false;
  bool passed = false;
  bool baseline_passed = false;
  double add = 0.0;
  double runtime_s = 0.0;
};

/// One synthetic trial: generate, vote, fit, score. Errors are reported as a
/// failed outcome.
inline TrialOutcome run_trial(const PointCloud& model, double diameter,
                              const SynthConfig& cfg, const BenchmarkOptions& opt) {
  TrialOutcome out;
  SynthScene scene;
  try {
    scene = generate(model, cfg);
  } catch (const Error&) {
    return out;
  }

  const Point3 model_c = centroid(model);
  const Point3 scene_c = centroid(scene.scene_points);
  const RigidTransform baseline = RigidTransform::translation_only(scene_c - model_c);
  out.baseline_passed =
      add_metric(model, scene.gt_pose, baseline) < opt.diameter_fraction * diameter;

  VotingConfig vc;
  vc.m_hypotheses = opt.m_hypotheses;
  vc.theta = opt.theta;
  vc.rng_seed = derive_seed(cfg.rng_seed, 5);
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto estimates = vote_all_keypoints(scene.field, vc);
    const RigidTransform pose = fit_from_votes(estimates, scene.model_kp);
    out.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.add = add_metric(model, scene.gt_pose, pose);
    out.ok = true;
    out.passed = out.add < opt.diameter_fraction * diameter;
  } catch (const Error&) {
    out.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

/// Runs `trials` seeded trials per grid cell. Trial t of a cell uses seed
/// derive_seed(cell.rng_seed, t); runs are identical for any thread count
/// except for the runtime column.
inline std::vector<BenchmarkRow> benchmark_sweep(const PointCloud& model,
                                                 const std::vector<SynthConfig>& grid,
                                                 const BenchmarkOptions& opt) {
  if (opt.trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  if (!(opt.diameter_fraction > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "diameter_fraction must be > 0");
  }
  const double diameter = model_diameter(model);
  std::vector<BenchmarkRow> rows;
  for (const auto& cell : grid) {
    cell.validate();
    std::vector<TrialOutcome> outcomes(opt.trials);
    parallel_for(opt.trials, opt.threads, [&](std::size_t t) {
      SynthConfig cfg = cell;
      cfg.rng_seed = derive_seed(cell.rng_seed, t);
      outcomes[t] = run_trial(model, diameter, cfg, opt);
    });

    BenchmarkRow row;
    row.config = cell;
    row.trials = opt.trials;
    std::size_t passed = 0;
    std::size_t baseline = 0;
    double add_sum = 0.0;
    double time_sum = 0.0;
    for (const auto& o : outcomes) {
      passed += o.passed ? 1 : 0;
      baseline += o.baseline_passed ? 1 : 0;
      time_sum += o.runtime_s;
      if (o.ok) {
        add_sum += o.add;
      } else {
        ++row.failures;
      }
    }
    const auto n = static_cast<double>(opt.trials);
    row.accuracy = static_cast<double>(passed) / n;
    row.baseline_accuracy = static_cast<double>(baseline) / n;
    const std::size_t ok = opt.trials - row.failures;
    row.mean_add = ok > 0 ? add_sum / static_cast<double>(ok)
                          : std::numeric_limits<double>::quiet_NaN();
    row.mean_runtime = time_sum / n;
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"n_points", c.n_points},
          {"k_keypoints", c.k_keypoints},
          {"angular_noise_deg", c.angular_noise_deg},
          {"outlier_fraction", c.outlier_fraction},
          {"occlusion_fraction", c.occlusion_fraction},
          {"pose_sampling", to_string(c.pose_sampling)},
          {"rng_seed", c.rng_seed},
          {"translation_half_extent_m", c.pose_box.half_extent},
          {"depth_offset_m", c.pose_box.depth_offset}};
}

/// Reads the keys present in `j` over `base`.
inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {}) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "synth config must be an object");
  try {
    if (j.contains("n_points")) base.n_points = j.at("n_points").get<std::size_t>();
    if (j.contains("k_keypoints")) base.k_keypoints = j.at("k_keypoints").get<std::size_t>();
    if (j.contains("angular_noise_deg")) base.angular_noise_deg = j.at("angular_noise_deg").get<double>();
    if (j.contains("outlier_fraction")) base.outlier_fraction = j.at("outlier_fraction").get<double>();
    if (j.contains("occlusion_fraction")) base.occlusion_fraction = j.at("occlusion_fraction").get<double>();
    if (j.contains("pose_sampling")) {
      base.pose_sampling = pose_sampling_from_string(j.at("pose_sampling").get<std::string>());
    }
    if (j.contains("rng_seed")) base.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (j.contains("translation_half_extent_m")) {
      base.pose_box.half_extent = j.at("translation_half_extent_m").get<double>();
    }
    if (j.contains("depth_offset_m")) base.pose_box.depth_offset = j.at("depth_offset_m").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  base.validate();
  return base;
}

struct SweepSpec {
  BenchmarkOptions options;
  std::vector<SynthConfig> grid;
};

/// {"trials", "diameter_fraction", "m_hypotheses", "theta", "base": {...},
///  "grid": [{...overrides}, ...]}. An absent grid means the base config alone.
inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "sweep spec must be an object");
  SweepSpec spec;
  try {
    if (j.contains("trials")) spec.options.trials = j.at("trials").get<std::size_t>();
    if (j.contains("diameter_fraction")) {
      spec.options.diameter_fraction = j.at("diameter_fraction").get<double>();
    }
    if (j.contains("m_hypotheses")) spec.options.m_hypotheses = j.at("m_hypotheses").get<std::size_t>();
    if (j.contains("theta")) spec.options.theta = j.at("theta").get<double>();
    const SynthConfig base =
        j.contains("base") ? synth_config_from_json(j.at("base")) : SynthConfig{};
    if (j.contains("grid")) {
      if (!j.at("grid").is_array()) throw Error(ErrorCode::ParseError, "grid must be an array");
      for (const auto& cell : j.at("grid")) spec.grid.push_back(synth_config_from_json(cell, base));
    } else {
      spec.grid.push_back(base);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (spec.options.trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
  return spec;
}

inline nlohmann::json to_json(const std::vector<BenchmarkRow>& rows,
                              const BenchmarkOptions& opt) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"config", to_json(r.config)},
                   {"trials", r.trials},
                   {"diameter_fraction", opt.diameter_fraction},
                   {"m_hypotheses", opt.m_hypotheses},
                   {"theta", opt.theta},
                   {"accuracy", r.accuracy},
                   {"baseline_accuracy", r.baseline_accuracy},
                   {"failures", r.failures},
                   {"mean_add_m", r.mean_add},
                   {"mean_runtime_s", r.mean_runtime}});
  }
  return out;
}

inline std::string to_csv(const std::vector<BenchmarkRow>& rows, const BenchmarkOptions& opt) {
  std::ostringstream os;
  os.precision(10);
  os << "n_points,k_keypoints,angular_noise_deg,outlier_fraction,occlusion_fraction,"
        "pose_sampling,rng_seed,trials,diameter_fraction,m_hypotheses,theta,"
        "accuracy,baseline_accuracy,failures,mean_add_m,mean_runtime_s\n";
  for (const auto& r : rows) {
    const auto& c = r.config;
    os << c.n_points << ',' << c.k_keypoints << ',' << c.angular_noise_deg << ','
       << c.outlier_fraction << ',' << c.occlusion_fraction << ','
       << to_string(c.pose_sampling) << ',' << c.rng_seed << ',' << r.trials << ','
       << opt.diameter_fraction << ',' << opt.m_hypotheses << ',' << opt.theta << ','
       << r.accuracy << ',' << r.baseline_accuracy << ',' << r.failures << ','
       << r.mean_add << ',' << r.mean_runtime << '\n';
  }
  return os.str();
}

}  // namespace keyvote3d
