// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scenemem/retrieval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace scenemem;
using scenemem::testing::random_cloud;
using scenemem::testing::random_pose;

using oracle::set_iou;

TEST(VoxelIou, Identities) {
  std::mt19937_64 rng(31);
  const PointCloud a = random_cloud(rng, 300, 0, 1);
  EXPECT_EQ(voxel_iou(a, a, 0.1), 1.0);
  const PointCloud far = random_cloud(rng, 300, 5, 6);
  EXPECT_EQ(voxel_iou(a, far, 0.1), 0.0);
  EXPECT_EQ(voxel_iou(PointCloud{}, PointCloud{}, 0.1), 0.0);
  EXPECT_EQ(voxel_iou(a, PointCloud{}, 0.1), 0.0);
}

TEST(VoxelIou, MatchesSetOracleAndIsSymmetric) {
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<int> n(0, 400);
  for (int i = 0; i < 100; ++i) {
    const PointCloud a = random_cloud(rng, n(rng), -1, 1), b = random_cloud(rng, n(rng), -0.5, 1.5);
    EXPECT_EQ(voxel_iou(a, b, 0.2), set_iou(a, b, 0.2));
    EXPECT_NEAR(voxel_iou(a, b, 0.2), voxel_iou(b, a, 0.2), 1e-9);
  }
}

TEST(SpatialOverlap, RegistersCandidateIntoTargetFrame) {
  std::mt19937_64 rng(33);
  const PointCloud world = random_cloud(rng, 500, -1, 1);
  const Pose a = random_pose(rng), b = random_pose(rng);
  // The same world points expressed in each camera's frame overlap perfectly
  // (up to rounding at voxel borders).
  const ViewCloud va{0, transform_cloud(world, invert(a)), a};
  const ViewCloud vb{1, transform_cloud(world, invert(b)), b};
  EXPECT_GT(spatial_overlap(va, vb, 0.05), 0.98);
  EXPECT_LT(voxel_iou(va.cloud, vb.cloud, 0.05), 0.5);
}

TEST(Retrieval, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(34);
  std::uniform_int_distribution<int> nt(1, 12), nc(0, 20), k(1, 5), stride(1, 4);
  std::uniform_real_distribution<double> eps(0.0, 0.3);
  for (int inst = 0; inst < 100; ++inst) {
    RetrievalConfig cfg;
    cfg.max_refs = k(rng);
    cfg.stride = stride(rng);
    cfg.epsilon = eps(rng);
    cfg.iou_cube_side = 0.25;
    std::vector<ViewCloud> targets, cands;
    for (int i = 0, n = nt(rng); i < n; ++i) targets.push_back({i, random_cloud(rng, 60, 0, 2), random_pose(rng, 0.3)});
    for (int i = 0, n = nc(rng); i < n; ++i) cands.push_back({100 + i, random_cloud(rng, 60, 0, 2), random_pose(rng, 0.3)});

    const std::vector<int> expect = oracle::brute_force_retrieve(targets, cands, cfg);
    EXPECT_EQ(retrieve_references(targets, cands, cfg), expect) << "instance " << inst;
  }
}

TEST(Retrieval, EpsilonIsStrict) {
  std::mt19937_64 rng(35);
  const PointCloud c = random_cloud(rng, 100, 0, 1);
  const ViewCloud t{0, c, Pose::identity()};
  const ViewCloud cand{7, c, Pose::identity()};
  RetrievalConfig cfg;
  cfg.iou_cube_side = 0.1;
  cfg.epsilon = 1.0;
  EXPECT_TRUE(retrieve_references(std::span(&t, 1), std::span(&cand, 1), cfg).empty());
  cfg.epsilon = 0.999;
  EXPECT_EQ(retrieve_references(std::span(&t, 1), std::span(&cand, 1), cfg), std::vector<int>{7});
}

TEST(Retrieval, DeduplicatesAndCaps) {
  std::mt19937_64 rng(36);
  std::vector<ViewCloud> targets, cands;
  for (int i = 0; i < 10; ++i) {
    const PointCloud c = random_cloud(rng, 80, i * 10.0, i * 10.0 + 1);
    targets.push_back({i, c, Pose::identity()});
    cands.push_back({50 + i / 2, c, Pose::identity()});  // pairs of targets share one candidate id
  }
  RetrievalConfig cfg;
  cfg.iou_cube_side = 0.2;
  cfg.stride = 1;
  cfg.max_refs = 3;
  const RetrievalResult r = retrieve_references_detailed(targets, cands, cfg);
  EXPECT_EQ(r.ids, (std::vector<int>{50, 51, 52}));
  EXPECT_EQ(r.probed_targets.size(), 10u);
  cfg.max_refs = 10;
  EXPECT_EQ(retrieve_references(targets, cands, cfg), (std::vector<int>{50, 51, 52, 53, 54}));
}

TEST(Retrieval, ProbesEveryStride) {
  std::mt19937_64 rng(37);
  std::vector<ViewCloud> targets;
  for (int i = 0; i < 15; ++i) targets.push_back({i, random_cloud(rng, 10, 0, 1), Pose::identity()});
  const ViewCloud cand{1, random_cloud(rng, 10, 0, 1), Pose::identity()};
  RetrievalConfig cfg;
  cfg.stride = 7;
  const RetrievalResult r = retrieve_references_detailed(targets, std::span(&cand, 1), cfg);
  EXPECT_EQ(r.probed_targets, (std::vector<int>{0, 7, 14}));
  cfg.max_refs = 0;
  EXPECT_THROW(retrieve_references(targets, std::span(&cand, 1), cfg), std::invalid_argument);
}
