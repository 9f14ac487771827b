// keyvote3d command-line driver: keypoint extraction, vote-based pose
// estimation, ADD/ADD-S evaluation and synthetic benchmarking.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "keyvote3d/keyvote3d.hpp"

namespace kv = keyvote3d;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIngest = 2;
constexpr int kExitVoting = 3;
constexpr int kExitFit = 4;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

int fail(int code, const std::string& stage, const std::exception& e) {
  std::cerr << "error [" << stage << "]: " << e.what() << "\n";
  return code;
}

struct KeypointsArgs {
  std::string model, out;
  std::size_t k = 8;
  std::string seed_rule = "centroid";
};

int cmd_keypoints(const KeypointsArgs& a) {
  try {
    const auto model = kv::io::load_ply(a.model);
    const auto seed = a.seed_rule == "first" ? kv::FpsSeed::FirstIndex
                                             : kv::FpsSeed::FarthestFromCentroid;
    std::vector<kv::Point3> pts;
    const auto fps = kv::fps_keypoints(model, a.k, seed);
    pts.assign(fps.begin(), fps.end());
    pts.push_back(kv::centroid(model));
    const kv::ModelKeypoints kp(std::move(pts));
    kv::io::write_file(a.out, kv::io::keypoints_to_json(kp, a.k).dump(2) + "\n");
    if (kv::io::load_keypoints(a.out) != kp) {
      std::cerr << "error: keypoint file failed to validate on reload\n";
      return kExitIngest;
    }
    std::cout << "wrote " << kp.size() << " keypoints (" << a.k << " FPS + center) to "
              << a.out << "\n"
              << std::setprecision(9) << "min pairwise keypoint distance: "
              << kp.min_pairwise_distance() << " m\n";
  } catch (const std::exception& e) {
    return fail(kExitIngest, "keypoints", e);
  }
  return kExitOk;
}

struct PipelineArgs {
  std::string votefield, depth, intrinsics, mask, depth_unit = "mm";
  std::string model, keypoints, out;
  double theta = 0.999;
  std::size_t hypotheses = 128;
  std::size_t n_points = 500;
  bool refine = false;
  std::size_t refine_iters = 10;
  double refine_max_dist = 0.01;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

int cmd_pipeline(const PipelineArgs& a) {
  const auto t_start = Clock::now();
  kv::VoteField field;
  kv::ModelKeypoints model_kp;
  std::optional<kv::PointCloud> model;
  std::optional<kv::PointCloud> depth_cloud;
  try {
    if (a.votefield.empty()) {
      throw kv::Error(kv::ErrorCode::InvalidArgument,
                      "--votefield is required; depth input only supplies the refinement cloud");
    }
    field = kv::io::load_vote_field(a.votefield);
    model_kp = kv::io::load_keypoints(a.keypoints);
    if (model_kp.size() != field.num_keypoints()) {
      throw kv::Error(kv::ErrorCode::ShapeMismatch,
                      "vote field has K=" + std::to_string(field.num_keypoints()) +
                          " but keypoint file has " + std::to_string(model_kp.size()));
    }
    if (!a.model.empty()) model = kv::io::load_ply(a.model);
    if (a.refine && !model) {
      throw kv::Error(kv::ErrorCode::InvalidArgument, "--refine needs --model");
    }
    if (!a.depth.empty()) {
      if (a.intrinsics.empty()) {
        throw kv::Error(kv::ErrorCode::InvalidArgument, "--depth needs --intrinsics");
      }
      const auto unit = a.depth_unit == "m" ? kv::io::DepthUnit::Meters
                                            : kv::io::DepthUnit::Millimeters;
      const auto depth = kv::io::load_depth(a.depth, unit);
      const auto k = kv::io::load_intrinsics(a.intrinsics);
      std::optional<kv::io::Mask> mask;
      if (!a.mask.empty()) mask = kv::io::load_mask(a.mask);
      depth_cloud = kv::io::backproject(depth, k, mask);
      if (depth_cloud->empty()) {
        throw kv::Error(kv::ErrorCode::InsufficientPoints, "no valid depth pixels");
      }
    }
  } catch (const std::exception& e) {
    return fail(kExitIngest, "ingest", e);
  }
  const double load_ms = ms_since(t_start);

  const auto rows = kv::subsample_indices(field.num_points(), a.n_points,
                                          kv::derive_seed(a.seed, 0));
  const kv::VoteField sampled = field.select_rows(rows);

  kv::VotingConfig vc;
  vc.m_hypotheses = a.hypotheses;
  vc.theta = a.theta;
  vc.rng_seed = kv::derive_seed(a.seed, 1);
  const auto t_vote = Clock::now();
  std::vector<kv::KeypointEstimate> estimates;
  try {
    estimates = kv::vote_all_keypoints(sampled, vc, a.threads);
  } catch (const std::exception& e) {
    return fail(kExitVoting, "voting", e);
  }
  const double vote_ms = ms_since(t_vote);

  const auto t_fit = Clock::now();
  kv::RigidTransform pose;
  try {
    pose = kv::fit_from_votes(estimates, model_kp);
  } catch (const std::exception& e) {
    return fail(kExitFit, "fit", e);
  }
  const double fit_ms = ms_since(t_fit);

  double refine_ms = 0.0;
  if (a.refine) {
    const auto t_ref = Clock::now();
    const kv::PointCloud& scene = depth_cloud ? *depth_cloud : sampled.scene_points();
    try {
      const auto r = kv::icp_refine(pose, scene, *model, a.refine_iters, a.refine_max_dist,
                                    a.threads);
      pose = r.transform;
      std::cout << "refine: " << r.iterations << " iterations, objective "
                << r.initial_objective << " -> " << r.objective << " m^2"
                << (r.no_correspondences ? " (no correspondences at some iterate)" : "")
                << "\n";
    } catch (const std::exception& e) {
      return fail(kExitFit, "refine", e);
    }
    refine_ms = ms_since(t_ref);
  }

  try {
    kv::io::save_pose(pose, a.out);
    if (kv::io::load_pose(a.out) != pose) {
      std::cerr << "error: pose file failed to validate on reload\n";
      return kExitIngest;
    }
  } catch (const std::exception& e) {
    return fail(kExitIngest, "write", e);
  }

  std::cout << "keypoint confidences (of " << sampled.num_points() << " points):";
  for (const auto& e : estimates) std::cout << ' ' << e.confidence;
  std::cout << "\n" << std::fixed << std::setprecision(3)
            << "timing: load " << load_ms << " ms, voting " << vote_ms << " ms, fitting "
            << fit_ms << " ms, refine " << refine_ms << " ms; voting+fitting "
            << vote_ms + fit_ms << " ms\n"
            << "wrote pose to " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::vector<std::string> pred, gt;
  std::string model, out;
  bool symmetric = false;
  double diameter_fraction = 0.10;
  std::size_t threads = 0;
};

int cmd_eval(const EvalArgs& a) {
  kv::EvalReport report;
  try {
    if (a.pred.size() != a.gt.size() || a.pred.empty()) {
      throw kv::Error(kv::ErrorCode::InvalidArgument,
                      "--pred and --gt need the same, non-zero number of files");
    }
    auto model = std::make_shared<const kv::PointCloud>(kv::io::load_ply(a.model));
    std::vector<kv::EvalInstance> instances;
    for (std::size_t i = 0; i < a.pred.size(); ++i) {
      instances.push_back({model, kv::io::load_pose(a.gt[i]), kv::io::load_pose(a.pred[i]),
                           a.symmetric});
    }
    report = kv::evaluate(instances, a.diameter_fraction, a.threads);
    kv::io::write_file(a.out, kv::to_json(report).dump(2) + "\n");
    const auto reread = kv::io::parse_json(kv::io::read_file(a.out));
    if (!reread.contains("accuracy")) {
      std::cerr << "error: report failed to validate on reload\n";
      return kExitIngest;
    }
  } catch (const std::exception& e) {
    return fail(kExitIngest, "eval", e);
  }
  for (std::size_t i = 0; i < report.per_instance.size(); ++i) {
    const auto& r = report.per_instance[i];
    std::cout << "instance " << i << ": " << kv::to_string(r.metric_kind) << " "
              << std::setprecision(6) << r.add_distance << " m (threshold " << r.threshold
              << " m) " << (r.passed ? "pass" : "fail") << "\n";
  }
  std::cout << "accuracy: " << std::fixed << std::setprecision(1) << report.accuracy * 100.0
            << "%\n";
  return kExitOk;
}

struct BenchArgs {
  std::string model, sweep, out, json_out;
  std::size_t threads = 0;
};

int cmd_synth_bench(const BenchArgs& a) {
  try {
    const auto model = kv::io::load_ply(a.model);
    auto spec = kv::sweep_spec_from_json(kv::io::parse_json(kv::io::read_file(a.sweep)));
    spec.options.threads = a.threads;
    const auto rows = kv::benchmark_sweep(model, spec.grid, spec.options);
    kv::io::write_file(a.out, kv::to_csv(rows, spec.options));
    if (!a.json_out.empty()) {
      kv::io::write_file(a.json_out, kv::to_json(rows, spec.options).dump(2) + "\n");
    }
    std::cout << std::left << std::setw(8) << "noise" << std::setw(10) << "outliers"
              << std::setw(11) << "occlusion" << std::setw(10) << "accuracy" << std::setw(10)
              << "baseline" << std::setw(14) << "mean_add_m" << "mean_runtime_s\n";
    for (const auto& r : rows) {
      std::cout << std::setw(8) << r.config.angular_noise_deg << std::setw(10)
                << r.config.outlier_fraction << std::setw(11) << r.config.occlusion_fraction
                << std::setw(10) << r.accuracy << std::setw(10) << r.baseline_accuracy
                << std::setw(14) << r.mean_add << r.mean_runtime << "\n";
    }
    std::cout << "wrote " << rows.size() << " rows to " << a.out << "\n";
  } catch (const std::exception& e) {
    return fail(kExitIngest, "synth-bench", e);
  }
  return kExitOk;
}

struct SceneArgs {
  std::string model, out_votefield, out_gt, out_keypoints;
  std::size_t k = 8;
  std::size_t n_points = 500;
  double noise = 0.0, outliers = 0.0, occlusion = 0.0;
  std::string pose = "uniform_rotation";
  std::uint64_t seed = 0;
  bool json = false;
};

int cmd_synth_scene(const SceneArgs& a) {
  try {
    const auto model = kv::io::load_ply(a.model);
    kv::SynthConfig cfg;
    cfg.k_keypoints = a.k + 1;
    cfg.n_points = a.n_points;
    cfg.angular_noise_deg = a.noise;
    cfg.outlier_fraction = a.outliers;
    cfg.occlusion_fraction = a.occlusion;
    cfg.pose_sampling = kv::pose_sampling_from_string(a.pose);
    cfg.rng_seed = a.seed;
    const auto scene = kv::generate(model, cfg);
    if (a.json) {
      kv::io::save_vote_field_json(scene.field, a.out_votefield);
    } else {
      kv::io::save_vote_field(scene.field, a.out_votefield);
    }
    kv::io::save_pose(scene.gt_pose, a.out_gt);
    if (!a.out_keypoints.empty()) {
      kv::io::write_file(a.out_keypoints,
                         kv::io::keypoints_to_json(scene.model_kp, a.k).dump(2) + "\n");
    }
    std::cout << "wrote " << scene.field.num_points() << "x" << scene.field.num_keypoints()
              << " vote field to " << a.out_votefield << " and ground truth to " << a.out_gt
              << "\n";
  } catch (const std::exception& e) {
    return fail(kExitIngest, "synth-scene", e);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keyvote3d: 3D keypoint voting for object 6D pose estimation.\n"
               "Defaults tagged [paper] follow the published method; [repo-default] values "
               "are choices of this tool."};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");

  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads, 0 = all cores [repo-default: 0]")
      ->envname("KEYVOTE3D_THREADS");

  KeypointsArgs kp;
  auto* keypoints = app.add_subcommand("keypoints", "Select FPS keypoints plus the centroid");
  keypoints->add_option("--model", kp.model, "Model point cloud (PLY, meters)")->required()->check(CLI::ExistingFile);
  keypoints->add_option("--k", kp.k, "Number of FPS keypoints [paper: 8]")->check(CLI::PositiveNumber);
  keypoints->add_option("--out", kp.out, "Output keypoint JSON")->required();
  keypoints->add_option("--seed-rule", kp.seed_rule, "FPS start point [repo-default: centroid]")
      ->check(CLI::IsMember({"centroid", "first"}));

  PipelineArgs pl;
  auto* pipeline = app.add_subcommand("pipeline", "Vote keypoints, fit the pose, optionally refine");
  pipeline->add_option("--votefield", pl.votefield, "Vote field (KV3DVF1 binary or JSON mirror)");
  pipeline->add_option("--depth", pl.depth, "Depth image (PNG/PGM 16-bit or PFM) for refinement");
  pipeline->add_option("--intrinsics", pl.intrinsics, "Camera intrinsics JSON");
  pipeline->add_option("--mask", pl.mask, "Object mask image, nonzero = object");
  pipeline->add_option("--depth-unit", pl.depth_unit, "Depth file unit [repo-default: mm]")
      ->check(CLI::IsMember({"m", "mm"}));
  pipeline->add_option("--model", pl.model, "Model point cloud (PLY), required with --refine");
  pipeline->add_option("--keypoints", pl.keypoints, "Model keypoint JSON")->required();
  pipeline->add_option("--out", pl.out, "Output pose JSON")->required();
  pipeline->add_option("--theta", pl.theta, "Inlier cosine threshold [paper: 0.999]")
      ->check(CLI::Range(0.0, 1.0));
  pipeline->add_option("--hypotheses", pl.hypotheses, "RANSAC hypotheses per keypoint [repo-default: 128]")
      ->check(CLI::PositiveNumber);
  pipeline->add_option("--n-points", pl.n_points, "Scene points sampled for voting [paper: 500]")
      ->check(CLI::PositiveNumber);
  pipeline->add_flag("--refine", pl.refine, "Run ICP refinement [repo-default: off]");
  pipeline->add_option("--refine-iters", pl.refine_iters, "ICP iterations [repo-default: 10]")
      ->check(CLI::PositiveNumber);
  pipeline->add_option("--refine-max-dist", pl.refine_max_dist,
                       "ICP correspondence radius in meters [repo-default: 0.01]");
  pipeline->add_option("--seed", pl.seed, "RNG seed [repo-default: 0]");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "ADD / ADD-S accuracy of predicted poses");
  eval->add_option("--pred", ev.pred, "Predicted pose JSON files")->required();
  eval->add_option("--gt", ev.gt, "Ground-truth pose JSON files, same order")->required();
  eval->add_option("--model", ev.model, "Model point cloud (PLY)")->required();
  eval->add_flag("--symmetric", ev.symmetric, "Use ADD-S (symmetric object)");
  eval->add_option("--diameter-fraction", ev.diameter_fraction,
                   "Pass threshold as a fraction of model diameter [paper: 0.10]")
      ->check(CLI::PositiveNumber);
  eval->add_option("--out", ev.out, "Output report JSON")->required();

  BenchArgs bn;
  auto* bench = app.add_subcommand("synth-bench", "Seeded synthetic robustness sweep");
  bench->add_option("--model", bn.model, "Model point cloud (PLY)")->required();
  bench->add_option("--sweep", bn.sweep, "Sweep spec JSON")->required();
  bench->add_option("--out", bn.out, "Output CSV")->required();
  bench->add_option("--json", bn.json_out, "Optional JSON copy of the table");

  SceneArgs sc;
  auto* scene = app.add_subcommand("synth-scene", "Write one synthetic vote field and its ground truth");
  scene->add_option("--model", sc.model, "Model point cloud (PLY)")->required();
  scene->add_option("--out", sc.out_votefield, "Output vote field")->required();
  scene->add_option("--out-gt", sc.out_gt, "Output ground-truth pose JSON")->required();
  scene->add_option("--out-keypoints", sc.out_keypoints, "Output keypoint JSON");
  scene->add_option("--k", sc.k, "FPS keypoints [paper: 8]")->check(CLI::PositiveNumber);
  scene->add_option("--n-points", sc.n_points, "Scene points [paper: 500]")->check(CLI::PositiveNumber);
  scene->add_option("--noise", sc.noise, "Angular noise, degrees [repo-default: 0]");
  scene->add_option("--outliers", sc.outliers, "Outlier fraction [repo-default: 0]");
  scene->add_option("--occlusion", sc.occlusion, "Half-space occlusion fraction [repo-default: 0]");
  scene->add_option("--pose", sc.pose, "Pose sampling [repo-default: uniform_rotation]")
      ->check(CLI::IsMember({"uniform_rotation", "small_angle"}));
  scene->add_option("--seed", sc.seed, "RNG seed [repo-default: 0]");
  scene->add_flag("--json", sc.json, "Write the JSON mirror instead of binary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  pl.threads = threads;
  ev.threads = threads;
  bn.threads = threads;
  if (*keypoints) return cmd_keypoints(kp);
  if (*pipeline) return cmd_pipeline(pl);
  if (*eval) return cmd_eval(ev);
  if (*bench) return cmd_synth_bench(bn);
  if (*scene) return cmd_synth_scene(sc);
  return kExitUsage;
}
