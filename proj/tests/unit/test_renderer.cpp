// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "scenemem/renderer.hpp"
#include "scenemem/voxel_memory.hpp"
#include "test_util.hpp"

using namespace scenemem;

namespace {

const Intrinsics kIntr = Intrinsics::from_fov(32, 24, 60.0);

PointCloud one_point(const Vec3& p, const Color& c) {
  PointCloud out;
  out.push_back(p, c);
  return out;
}

}  // namespace

TEST(Render, EmptyCloudIsAllZero) {
  const ProjectionImage img = render_projection({}, Pose::identity(), kIntr);
  EXPECT_EQ(img.valid.count(), 0u);
  for (float v : img.rgb.data) EXPECT_EQ(v, 0.0f);
  for (float v : img.depth.data) EXPECT_EQ(v, 0.0f);
  for (int32_t w : img.winner) EXPECT_EQ(w, -1);
}

TEST(Render, SplatFootprint) {
  const Vec3 p = back_project(Vec2(10, 8), 2.0, Pose::identity(), kIntr);
  const PointCloud c = one_point(p, Color(1, 0.5f, 0));
  EXPECT_EQ(render_projection(c, Pose::identity(), kIntr, 0).valid.count(), 1u);
  EXPECT_EQ(render_projection(c, Pose::identity(), kIntr, 1).valid.count(), 5u);
  EXPECT_EQ(render_projection(c, Pose::identity(), kIntr, 2).valid.count(), 13u);
  const ProjectionImage img = render_projection(c, Pose::identity(), kIntr, 0);
  EXPECT_TRUE(img.valid.at(10, 8));
  EXPECT_FLOAT_EQ(img.depth.at(10, 8), 2.0f);
  EXPECT_EQ(img.rgb.rgb(10, 8), Color(1, 0.5f, 0));
  EXPECT_THROW(render_projection(c, Pose::identity(), kIntr, -1), std::invalid_argument);
}

TEST(Render, NearestWinsAndTiesKeepLowerIndex) {
  PointCloud c;
  c.push_back(back_project(Vec2(5, 5), 3.0, Pose::identity(), kIntr), Color(1, 0, 0));
  c.push_back(back_project(Vec2(5, 5), 1.0, Pose::identity(), kIntr), Color(0, 1, 0));
  c.push_back(back_project(Vec2(5, 5), 1.0, Pose::identity(), kIntr), Color(0, 0, 1));
  const ProjectionImage img = render_projection(c, Pose::identity(), kIntr, 0);
  EXPECT_EQ(img.winner[5 * 32 + 5], 1);
  EXPECT_EQ(img.rgb.rgb(5, 5), Color(0, 1, 0));
}

TEST(Render, BehindCameraAndOffscreenIgnored) {
  PointCloud c;
  c.push_back(Vec3(0, 0, -2), Color(1, 1, 1));
  c.push_back(Vec3(100, 0, 1), Color(1, 1, 1));
  EXPECT_EQ(render_projection(c, Pose::identity(), kIntr).valid.count(), 0u);
}

TEST(Render, ValidIffWinnerProperty) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud c = scenemem::testing::random_cloud(rng, 300, -3, 3);
    const Pose cam = scenemem::testing::random_pose(rng, 0.5);
    const ProjectionImage img = render_projection(c, cam, kIntr);
    for (int y = 0; y < kIntr.height; ++y) {
      for (int x = 0; x < kIntr.width; ++x) {
        const int32_t w = img.winner[std::size_t(y) * kIntr.width + x];
        ASSERT_EQ(img.valid.at(x, y), w >= 0);
        if (w < 0) {
          ASSERT_EQ(img.depth.at(x, y), 0.0f);
          ASSERT_EQ(img.rgb.rgb(x, y), Color(0, 0, 0));
        } else {
          ASSERT_GT(img.depth.at(x, y), 0.0f);
          ASSERT_EQ(img.rgb.rgb(x, y), c.colors[w]);
        }
      }
    }
  }
}

TEST(Render, DepthRoundTripAtRadiusZero) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<float> d(0.5f, 8.0f);
  PosedFrame f;
  f.rgb = scenemem::testing::random_image(rng, kIntr.width, kIntr.height);
  f.depth = Image(kIntr.width, kIntr.height, 1);
  for (float& v : f.depth.data) v = d(rng);
  f.pose = scenemem::testing::random_pose(rng);
  f.intrinsics = kIntr;
  const PointCloud cloud = back_project_frame(f);
  const ProjectionImage img = render_projection(cloud, f.pose, kIntr, 0);
  EXPECT_EQ(img.valid.count(), std::size_t(kIntr.width) * kIntr.height);
  for (std::size_t i = 0; i < f.depth.data.size(); ++i) {
    EXPECT_NEAR(img.depth.data[i], f.depth.data[i], 1e-4 * f.depth.data[i]);
  }
  EXPECT_EQ(img.rgb, f.rgb);
}

TEST(Render, SequenceAndVisibleSubcloud) {
  std::mt19937_64 rng(23);
  const PointCloud c = scenemem::testing::random_cloud(rng, 200, -1, 1);
  Trajectory traj;
  for (int i = 0; i < 3; ++i) traj.push_back({Pose(Mat3::Identity(), Vec3(0, 0, -4.0 - i)), kIntr});
  const ProjectionVideo v = render_sequence(c, traj);
  ASSERT_EQ(v.size(), 3u);
  const PointCloud vis = visible_subcloud(c, v[0], traj[0].pose);
  EXPECT_GT(vis.size(), 0u);
  EXPECT_LE(vis.size(), c.size());
  for (const Vec3& p : vis.positions) EXPECT_GT(p.z(), 0.0);  // camera frame
  traj.push_back({Pose::identity(), Intrinsics::from_fov(16, 16, 60)});
  EXPECT_THROW(render_sequence(c, traj), std::invalid_argument);
  EXPECT_THROW(render_sequence(c, Trajectory{}), std::invalid_argument);
}
