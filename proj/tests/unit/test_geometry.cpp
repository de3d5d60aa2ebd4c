// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "scenemem/geometry.hpp"
#include "test_util.hpp"

using namespace scenemem;
using scenemem::testing::random_pose;

TEST(Pose, RejectsNonRotation) {
  Mat3 r = Mat3::Identity();
  r(0, 0) = -1;  // reflection
  EXPECT_THROW(Pose(r, Vec3::Zero()), std::invalid_argument);
  EXPECT_THROW(Pose(2.0 * Mat3::Identity(), Vec3::Zero()), std::invalid_argument);
  EXPECT_NO_THROW(Pose(rotation_y(0.3), Vec3(1, 2, 3)));
}

TEST(Pose, ComposeInvertIdentity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    EXPECT_TRUE(compose(a, invert(a)).is_approx(Pose::identity(), 1e-12));
    const Vec3 x(0.3, -0.2, 1.7);
    EXPECT_LT((compose(a, b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
    EXPECT_LT((a.apply_inverse(a.apply(x)) - x).norm(), 1e-12);
  }
}

TEST(Pose, OrthonormalizeRepairsDrift) {
  Mat3 r = rotation_x(0.4) * rotation_z(-1.1);
  r(0, 1) += 1e-4;
  const Pose p = Pose::unchecked(r, Vec3::Zero()).orthonormalized();
  EXPECT_LT(p.orthonormality_error(), 1e-12);
  EXPECT_NEAR(p.rotation().determinant(), 1.0, 1e-12);
}

TEST(Pose, LookAtAxes) {
  const Pose p = Pose::look_at(Vec3(0, 0, 0), Vec3(0, 0, 5));
  // Forward +Z, image down is world down (+Y, since world up is -Y).
  EXPECT_TRUE(p.rotation().isApprox(Mat3::Identity(), 1e-12));
  const Pose q = Pose::look_at(Vec3(1, 0, 0), Vec3(2, 0, 0));
  EXPECT_LT((q.rotation().col(2) - Vec3(1, 0, 0)).norm(), 1e-12);
  EXPECT_LT((q.rotation().col(1) - Vec3(0, 1, 0)).norm(), 1e-12);
  EXPECT_THROW(Pose::look_at(Vec3::Zero(), Vec3(0, -1, 0)), std::invalid_argument);
}

TEST(Intrinsics, FromFovAndValidation) {
  const Intrinsics k = Intrinsics::from_fov(128, 96, 90.0);
  EXPECT_NEAR(k.fx, 64.0, 1e-9);
  EXPECT_DOUBLE_EQ(k.cx, 63.5);
  EXPECT_DOUBLE_EQ(k.cy, 47.5);
  Intrinsics bad = k;
  bad.fx = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = k;
  bad.cx = 128;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Projection, PrincipalPointAndBehindCamera) {
  const Intrinsics k = Intrinsics::from_fov(64, 64, 60.0);
  const auto p = project(Vec3(0, 0, 3), Pose::identity(), k);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->pixel.x(), k.cx);
  EXPECT_DOUBLE_EQ(p->depth, 3.0);
  EXPECT_FALSE(project(Vec3(0, 0, -1), Pose::identity(), k));
  EXPECT_FALSE(project(Vec3(0, 0, 0), Pose::identity(), k));
  EXPECT_FALSE(project(Vec3(0, 0, 1e-6), Pose::identity(), k));
  EXPECT_TRUE(project(Vec3(0, 0, 1e-6), Pose::identity(), k, 1e-7));
}

TEST(Projection, RoundTripProperty) {
  std::mt19937_64 rng(7);
  const Intrinsics k{80.0, 75.0, 31.5, 24.5, 64, 50};
  std::uniform_real_distribution<double> px(0, 63), py(0, 49), d(0.1, 20);
  for (int i = 0; i < 500; ++i) {
    const Pose cam = random_pose(rng, 3.0);
    const Vec2 pix(px(rng), py(rng));
    const double depth = d(rng);
    const auto p = project(back_project(pix, depth, cam, k), cam, k);
    ASSERT_TRUE(p);
    EXPECT_LT((p->pixel - pix).norm(), 1e-9);
    EXPECT_NEAR(p->depth, depth, 1e-9 * depth);
  }
  EXPECT_THROW(back_project(Vec2(1, 1), 0.0, Pose::identity(), k), std::invalid_argument);
}

TEST(PointCloud, ValidateAndTransform) {
  PointCloud c;
  c.push_back(Vec3(1, 0, 0), Color(0.2f, 0.4f, 0.6f), 3);
  EXPECT_NO_THROW(c.validate());
  const PointCloud t = transform_cloud(c, Pose(rotation_z(1.5707963267948966), Vec3(0, 0, 1)));
  EXPECT_LT((t.positions[0] - Vec3(0, 1, 1)).norm(), 1e-12);
  EXPECT_EQ(t.source_ids, c.source_ids);
  c.colors[0] = Color(1.5f, 0, 0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.colors.pop_back();
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
