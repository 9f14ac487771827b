#include "keyvote3d/vote_field.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support/models.hpp"

namespace keyvote3d {
namespace {

using testing::make_random_cloud;

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

VoteField random_exact_field(std::size_t n, std::size_t k, std::uint64_t seed) {
  const auto scene = make_random_cloud(n, seed);
  const auto kp = make_random_cloud(k, seed + 1000, 2.0);
  return ground_truth_vectors(scene, ModelKeypoints({kp.begin(), kp.end()}));
}

double angle_deg(const UnitVec3& a, const UnitVec3& b) {
  return std::acos(std::clamp(a.dot(b.vec()), -1.0, 1.0)) * kRadToDeg;
}

TEST(GroundTruthVectors, PointsTowardKeypoint) {
  const auto f = ground_truth_vectors(PointCloud({Point3(0, 0, 0), Point3(1, 1, 0)}),
                                      ModelKeypoints({Point3(1, 0, 0)}));
  EXPECT_EQ(f.vector(0, 0).vec(), Point3(1, 0, 0));
  const auto g = ground_truth_vectors(PointCloud({Point3(1, 1, 0)}),
                                      ModelKeypoints({Point3(1, 1, 5)}));
  EXPECT_EQ(g.vector(0, 0).vec(), Point3(0, 0, 1));
}

TEST(GroundTruthVectors, ReconstructsKeypoints) {
  const auto scene = make_random_cloud(200, 1);
  const auto kp_cloud = make_random_cloud(9, 2, 3.0);
  const ModelKeypoints kp({kp_cloud.begin(), kp_cloud.end()});
  const auto f = ground_truth_vectors(scene, kp);
  ASSERT_EQ(f.num_points(), 200u);
  ASSERT_EQ(f.num_keypoints(), 9u);
  for (std::size_t i = 0; i < f.num_points(); ++i) {
    for (std::size_t k = 0; k < kp.size(); ++k) {
      const double d = (kp[k] - scene[i]).norm();
      EXPECT_LE((scene[i] + d * f.vector(i, k).vec() - kp[k]).norm(), 1e-9);
    }
  }
}

TEST(GroundTruthVectors, CoincidentPointIsDegenerate) {
  try {
    ground_truth_vectors(PointCloud({Point3(1, 2, 3)}), ModelKeypoints({Point3(1, 2, 3)}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateGeometry);
  }
}

TEST(VoteField, RejectsWrongShape) {
  EXPECT_THROW(VoteField(make_random_cloud(3, 1), 2, std::vector<UnitVec3>(5)), Error);
}

TEST(SmoothL1, Values) {
  EXPECT_EQ(smooth_l1(0.0), 0.0);
  EXPECT_EQ(smooth_l1(2.0), 1.5);
  EXPECT_EQ(smooth_l1(0.5), 0.125);
  EXPECT_EQ(smooth_l1(-2.0), 1.5);
  EXPECT_EQ(smooth_l1(1.0), 0.5);  // both branches agree at the knee
}

TEST(VoteFieldLoss, ZeroForEqualFields) {
  const auto f = random_exact_field(50, 3, 4);
  EXPECT_EQ(vote_field_loss(f, f), 0.0);
}

TEST(VoteFieldLoss, SingleCell) {
  // Mirror-image unit vectors whose difference is exactly (0.1, 0, 0).
  const double y = std::sqrt(1.0 - 0.05 * 0.05);
  const PointCloud pts({Point3::Zero()});
  const VoteField gt(pts, 1, {UnitVec3(-0.05, y, 0)});
  const VoteField pred(pts, 1, {UnitVec3(0.05, y, 0)});
  EXPECT_NEAR(vote_field_loss(pred, gt), 0.005, 1e-15);
}

TEST(VoteFieldLoss, MatchesNaiveDoubleLoop) {
  const auto gt = random_exact_field(120, 5, 6);
  const auto pred = perturb(gt, 10.0, 0.2, 77);
  double oracle = 0.0;
  for (std::size_t k = 0; k < gt.num_keypoints(); ++k) {
    for (std::size_t i = 0; i < gt.num_points(); ++i) {
      for (int a = 0; a < 3; ++a) {
        const double d = pred.vector(i, k).vec()(a) - gt.vector(i, k).vec()(a);
        oracle += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
      }
    }
  }
  EXPECT_NEAR(vote_field_loss(pred, gt), oracle, 1e-9);
  EXPECT_DOUBLE_EQ(vote_field_loss(pred, gt), vote_field_loss(gt, pred));
  EXPECT_GT(vote_field_loss(pred, gt), 0.0);
}

TEST(VoteFieldLoss, ShapeMismatch) {
  const auto a = random_exact_field(10, 2, 8);
  const auto b = random_exact_field(10, 3, 8);
  try {
    vote_field_loss(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Perturb, NoCorruptionIsIdentity) {
  const auto f = random_exact_field(40, 4, 9);
  EXPECT_EQ(perturb(f, 0.0, 0.0, 123), f);
}

TEST(Perturb, DeterministicAndThreadIndependent) {
  const auto f = random_exact_field(300, 9, 10);
  const auto a = perturb(f, 5.0, 0.3, 5, 1);
  const auto b = perturb(f, 5.0, 0.3, 5, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, perturb(f, 5.0, 0.3, 6, 1));
}

TEST(Perturb, PreservesUnitNorm) {
  const auto f = perturb(random_exact_field(200, 9, 11), 20.0, 0.5, 3);
  for (const auto& v : f.vectors()) EXPECT_NEAR(v.vec().norm(), 1.0, 1e-9);
}

TEST(Perturb, AllOutliersAverageNinetyDegrees) {
  const auto f = random_exact_field(2000, 6, 12);  // 12000 cells
  const auto p = perturb(f, 0.0, 1.0, 4);
  double sum = 0.0;
  for (std::size_t i = 0; i < f.vectors().size(); ++i) sum += angle_deg(f.vectors()[i], p.vectors()[i]);
  EXPECT_NEAR(sum / static_cast<double>(f.vectors().size()), 90.0, 3.0);
}

TEST(Perturb, NoiseFollowsHalfNormal) {
  const auto f = random_exact_field(2000, 6, 13);
  const auto p = perturb(f, 5.0, 0.0, 5);
  double sum = 0.0;
  for (std::size_t i = 0; i < f.vectors().size(); ++i) sum += angle_deg(f.vectors()[i], p.vectors()[i]);
  const double expected = 5.0 * std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(sum / static_cast<double>(f.vectors().size()), expected, 0.5);
}

TEST(Perturb, RejectsBadArguments) {
  const auto f = random_exact_field(5, 1, 14);
  EXPECT_THROW(perturb(f, -1.0, 0.0, 0), Error);
  EXPECT_THROW(perturb(f, 0.0, 1.5, 0), Error);
}

TEST(VoteField, SelectRows) {
  const auto f = random_exact_field(10, 2, 15);
  const std::vector<std::size_t> rows{3, 1, 3};
  const auto s = f.select_rows(rows);
  ASSERT_EQ(s.num_points(), 3u);
  EXPECT_EQ(s.point(0), f.point(3));
  EXPECT_EQ(s.vector(1, 1), f.vector(1, 1));
  EXPECT_EQ(s.vector(2, 0), f.vector(3, 0));
}

}  // namespace
}  // namespace keyvote3d
