#include "keyvote3d/voting.hpp"

#include <gtest/gtest.h>

#include <random>

#include "keyvote3d/synth.hpp"
#include "support/models.hpp"
#include "support/oracles.hpp"

namespace keyvote3d {
namespace {

using testing::make_random_cloud;
using testing::random_transform;

UnitVec3 random_dir(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return UnitVec3::normalized(Eigen::Vector3d(g(rng), g(rng), g(rng)));
}

struct ExactCase {
  VoteField field;
  ModelKeypoints keypoints;  // scene frame
};

ExactCase exact_case(std::size_t n, std::size_t k, std::uint64_t seed) {
  const auto scene = make_random_cloud(n, seed, 0.1);
  const auto kp = make_random_cloud(k, seed + 1, 0.15);
  ModelKeypoints kps({kp.begin(), kp.end()});
  return {ground_truth_vectors(scene, kps), kps};
}

std::size_t naive_score(const Point3& h, const VoteField& f, std::size_t k, double theta) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < f.num_points(); ++i) {
    const Eigen::Vector3d d = h - f.point(i);
    if (d.norm() < 1e-9) continue;
    const Eigen::Vector3d u = d / d.norm();
    if (u.x() * f.vector(i, k).x() + u.y() * f.vector(i, k).y() + u.z() * f.vector(i, k).z() >=
        theta - kCosineSlack) {
      ++count;
    }
  }
  return count;
}

TEST(ClosestPointToLines, AxisLinesMeetAtOrigin) {
  const std::vector<Point3> pts{{2, 0, 0}, {0, 3, 0}, {0, 0, -1}};
  const std::vector<UnitVec3> dirs{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_LE(closest_point_to_lines(pts, dirs).norm(), 1e-12);
}

TEST(ClosestPointToLines, SkewLinesMidpointHeight) {
  const std::vector<Point3> pts{{0, 0, 0}, {0, 1, 1}};
  const std::vector<UnitVec3> dirs{{1, 0, 0}, {0, 1, 0}};
  const Point3 h = closest_point_to_lines(pts, dirs);
  EXPECT_NEAR(h.z(), 0.5, 1e-9);
  EXPECT_NEAR(h.x(), 0.0, 1e-9);
  EXPECT_NEAR(h.y(), 0.0, 1e-9);
}

TEST(ClosestPointToLines, ParallelLinesAreDegenerate) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const std::vector<UnitVec3> dirs(3, UnitVec3(0, 0, 1));
  try {
    closest_point_to_lines(pts, dirs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateLines);
  }
  EXPECT_GT(lines_condition_number(dirs), kMaxLineConditionNumber);
}

TEST(ClosestPointToLines, MatchesDerivativeFreeMinimizer) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Point3> pts;
    std::vector<UnitVec3> dirs;
    std::vector<Eigen::Vector3d> raw_dirs;
    for (int i = 0; i < 3; ++i) {
      pts.emplace_back(u(rng), u(rng), u(rng));
      dirs.push_back(random_dir(rng));
      raw_dirs.push_back(dirs.back().vec());
    }
    const Point3 h = closest_point_to_lines(pts, dirs);
    const Point3 oracle = testing::numeric_closest_point(pts, raw_dirs);
    EXPECT_LE((h - oracle).norm(), 1e-6) << "trial " << trial;

    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    for (int i = 0; i < 3; ++i) {
      const Eigen::Vector3d& v = raw_dirs[i];
      grad += 2.0 * (Matrix3::Identity() - v * v.transpose()) * (h - pts[i]);
    }
    EXPECT_LE(grad.norm(), 1e-8);
  }
}

TEST(ClosestPointToLines, RigidEquivariance) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = random_transform(rng);
    std::vector<Point3> pts, moved_pts;
    std::vector<UnitVec3> dirs, moved_dirs;
    for (int i = 0; i < 4; ++i) {
      pts.emplace_back(u(rng), u(rng), u(rng));
      dirs.push_back(random_dir(rng));
      moved_pts.push_back(t * pts.back());
      moved_dirs.push_back(UnitVec3::normalized(t.rotation() * dirs.back().vec()));
    }
    const Point3 h = closest_point_to_lines(pts, dirs);
    EXPECT_LE((closest_point_to_lines(moved_pts, moved_dirs) - t * h).norm(), 1e-8);
  }
}

TEST(ScoreHypothesis, TrueKeypointGetsEveryVote) {
  const auto c = exact_case(400, 3, 20);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(score_hypothesis(c.keypoints[k], c.field, k, 0.999), 400u);
  }
}

TEST(ScoreHypothesis, FarOppositePointGetsNoVotes) {
  // All vectors point toward +z; a hypothesis far below every point disagrees.
  const auto scene = make_random_cloud(100, 21, 0.1);
  const auto f = ground_truth_vectors(scene, ModelKeypoints({Point3(0, 0, 10)}));
  EXPECT_EQ(score_hypothesis(Point3(0, 0, -10), f, 0, 0.999), 0u);
}

TEST(ScoreHypothesis, MatchesNaiveLoop) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = exact_case(300, 2, 100 + trial);
    const auto noisy = perturb(c.field, 5.0, 0.3, trial);
    const Point3 h = c.keypoints[1] + Point3(u(rng), u(rng), u(rng)) * 0.1;
    for (double theta : {0.9, 0.99, 0.999}) {
      EXPECT_EQ(score_hypothesis(h, noisy, 1, theta), naive_score(h, noisy, 1, theta));
    }
  }
}

TEST(ScoreHypothesis, MonotoneInTheta) {
  const auto c = exact_case(500, 1, 23);
  const auto noisy = perturb(c.field, 3.0, 0.1, 1);
  EXPECT_LE(score_hypothesis(c.keypoints[0], noisy, 0, 0.9999),
            score_hypothesis(c.keypoints[0], noisy, 0, 0.999));
}

TEST(ScoreHypothesis, SkipsCoincidentPoint) {
  const PointCloud pts({Point3(0, 0, 0), Point3(1, 0, 0)});
  const VoteField f(pts, 1, {UnitVec3(1, 0, 0), UnitVec3(-1, 0, 0)});
  EXPECT_EQ(score_hypothesis(Point3(0, 0, 0), f, 0, 0.999), 1u);
}

TEST(VoteKeypoint, ExactFieldRecoversKeypoint) {
  const auto c = exact_case(500, 2, 30);
  VotingConfig cfg;
  cfg.m_hypotheses = 16;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto est = vote_keypoint(c.field, k, cfg);
    EXPECT_LE((est.position - c.keypoints[k]).norm(), 1e-6);
    EXPECT_EQ(est.confidence, 500u);
  }
}

TEST(VoteKeypoint, ExactFieldFullConfidenceForAnyTheta) {
  const auto c = exact_case(200, 1, 31);
  VotingConfig cfg;
  cfg.m_hypotheses = 8;
  for (double theta : {0.1, 0.5, 0.999, 0.999999, 1.0}) {
    cfg.theta = theta;
    EXPECT_EQ(vote_keypoint(c.field, 0, cfg).confidence, 200u) << theta;
  }
}

TEST(VoteKeypoint, ParallelVectorsAreDegenerate) {
  const auto scene = make_random_cloud(50, 32);
  const VoteField f(scene, 1, std::vector<UnitVec3>(50, UnitVec3(0, 0, 1)));
  try {
    vote_keypoint(f, 0, VotingConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllHypothesesDegenerate);
  }
}

TEST(VoteKeypoint, NeedsThreePoints) {
  const auto c = exact_case(2, 1, 33);
  try {
    vote_keypoint(c.field, 0, VotingConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientPoints);
  }
}

TEST(VoteKeypoint, RejectsBadConfig) {
  const auto c = exact_case(10, 1, 34);
  VotingConfig cfg;
  cfg.theta = 0.0;
  EXPECT_THROW(vote_keypoint(c.field, 0, cfg), Error);
  cfg.theta = 0.999;
  cfg.m_hypotheses = 0;
  EXPECT_THROW(vote_keypoint(c.field, 0, cfg), Error);
}

TEST(VoteKeypoint, InvariantToPointOrderOnExactField) {
  const auto c = exact_case(300, 1, 35);
  std::vector<std::size_t> rows(300);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), std::mt19937_64(1));
  const auto shuffled = c.field.select_rows(rows);
  VotingConfig cfg;
  cfg.m_hypotheses = 16;
  const auto a = vote_keypoint(c.field, 0, cfg);
  const auto b = vote_keypoint(shuffled, 0, cfg);
  EXPECT_EQ(a.confidence, b.confidence);
  EXPECT_LE((a.position - b.position).norm(), 1e-9);
}

TEST(VoteKeypoint, RobustToNoiseAndOutliers) {
  // 5 deg noise, 30% outliers, N = 500, M = 128: within 2% of the model
  // diameter in at least 99% of seeded trials.
  const auto model = testing::make_bracket_model();
  const double tolerance = 0.02 * model_diameter(model);
  SynthConfig sc;
  sc.angular_noise_deg = 5.0;
  sc.outlier_fraction = 0.3;
  VotingConfig cfg;
  std::size_t good = 0;
  const std::size_t trials = 1000;
  for (std::size_t t = 0; t < trials; ++t) {
    sc.rng_seed = t;
    const auto scene = generate(model, sc);
    const std::size_t k = t % scene.model_kp.size();
    cfg.rng_seed = t;
    const auto est = vote_keypoint(scene.field, k, cfg);
    const Point3 truth = scene.gt_pose * scene.model_kp[k];
    good += (est.position - truth).norm() < tolerance ? 1 : 0;
  }
  EXPECT_GE(good, 990u);
}

TEST(VoteAllKeypoints, ExactFieldAllNine) {
  const auto c = exact_case(500, 9, 40);
  VotingConfig cfg;
  cfg.m_hypotheses = 16;
  const auto est = vote_all_keypoints(c.field, cfg);
  ASSERT_EQ(est.size(), 9u);
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_LE((est[k].position - c.keypoints[k]).norm(), 1e-6);
    EXPECT_EQ(est[k].confidence, 500u);
  }
}

TEST(VoteAllKeypoints, SingleKeypointUsesDerivedSeed) {
  const auto c = exact_case(200, 1, 41);
  const auto noisy = perturb(c.field, 5.0, 0.3, 2);
  VotingConfig cfg;
  cfg.rng_seed = 99;
  const auto all = vote_all_keypoints(noisy, cfg);
  VotingConfig local = cfg;
  local.rng_seed = derive_seed(99, 0);
  const auto one = vote_keypoint(noisy, 0, local);
  EXPECT_EQ(all[0].position, one.position);
  EXPECT_EQ(all[0].confidence, one.confidence);
}

TEST(VoteAllKeypoints, SerialAndParallelAgree) {
  const auto c = exact_case(500, 9, 42);
  const auto noisy = perturb(c.field, 5.0, 0.3, 3);
  VotingConfig cfg;
  cfg.rng_seed = 5;
  const auto serial = vote_all_keypoints(noisy, cfg, 1);
  const auto parallel = vote_all_keypoints(noisy, cfg, 4);
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(serial[k].position, parallel[k].position);
    EXPECT_EQ(serial[k].confidence, parallel[k].confidence);
  }
}

TEST(VoteAllKeypoints, ErrorsCarryKeypointIndex) {
  const auto c = exact_case(60, 3, 43);
  std::vector<UnitVec3> vecs(c.field.vectors().begin(), c.field.vectors().end());
  for (std::size_t i = 0; i < 60; ++i) vecs[i * 3 + 2] = UnitVec3(0, 1, 0);
  const VoteField broken(c.field.scene_points(), 3, vecs);
  try {
    vote_all_keypoints(broken, VotingConfig{}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllHypothesesDegenerate);
    ASSERT_TRUE(e.keypoint().has_value());
    EXPECT_EQ(*e.keypoint(), 2);
  }
}

}  // namespace
}  // namespace keyvote3d
