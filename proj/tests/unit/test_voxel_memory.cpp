// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "scenemem/voxel_memory.hpp"
#include "test_util.hpp"

using namespace scenemem;

namespace {

PosedFrame flat_frame(double depth, const Pose& pose, int w = 16, int h = 12) {
  PosedFrame f;
  f.rgb = Image(w, h, 3, 0.5f);
  f.depth = Image(w, h, 1, static_cast<float>(depth));
  f.pose = pose;
  f.intrinsics = Intrinsics::from_fov(w, h, 60.0);
  return f;
}

}  // namespace

TEST(VoxelKey, FloorsTowardNegativeInfinity) {
  EXPECT_EQ(voxel_key(Vec3(0.0, 0.005, 0.0099), 0.01), (VoxelKey{0, 0, 0}));
  EXPECT_EQ(voxel_key(Vec3(-0.0001, -0.01, -0.0101), 0.01), (VoxelKey{-1, -1, -2}));
  EXPECT_THROW(voxel_key(Vec3::Zero(), 0.0), std::invalid_argument);
  EXPECT_THROW(SpatialMemory(-1.0), std::invalid_argument);
}

TEST(SpatialMemory, RefusingDoublesCountsKeepsCentroids) {
  SpatialMemory m(0.05);
  const PosedFrame f = flat_frame(2.0, Pose::identity());
  m.fuse(f);
  const SpatialMemory once = m;
  m.fuse(f);
  ASSERT_EQ(m.cell_count(), once.cell_count());
  for (const auto& [k, c] : once.cells()) {
    const VoxelCell* d = m.find(k);
    ASSERT_NE(d, nullptr);
    EXPECT_EQ(d->count, 2 * c.count);
    EXPECT_EQ(d->centroid(), c.centroid());
  }
}

TEST(SpatialMemory, FusionOrderInvariantProperty) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const PosedFrame a = flat_frame(1.0 + trial * 0.1, scenemem::testing::random_pose(rng, 0.5));
    const PosedFrame b = flat_frame(1.5, scenemem::testing::random_pose(rng, 0.5));
    SpatialMemory ab(0.03), ba(0.03);
    ab.fuse(a);
    ab.fuse(b);
    ba.fuse(b);
    ba.fuse(a);
    ASSERT_EQ(ab.sorted_keys(), ba.sorted_keys());
    for (const auto& [k, c] : ab.cells()) {
      EXPECT_EQ(ba.find(k)->count, c.count);
      EXPECT_LT((ba.find(k)->centroid() - c.centroid()).norm(), 1e-12);
    }
  }
}

TEST(SpatialMemory, SnapshotOnePointPerCellInsideItsCell) {
  std::mt19937_64 rng(12);
  SpatialMemory m(0.1);
  m.fuse_points(scenemem::testing::random_cloud(rng, 2000, -1, 1));
  const PointCloud s = m.snapshot();
  ASSERT_EQ(s.size(), m.cell_count());
  const auto keys = m.sorted_keys();
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(voxel_key(s.positions[i], 0.1), keys[i]);
}

TEST(SpatialMemory, MaskedAndInvalidPixelsAreSkipped) {
  PosedFrame f = flat_frame(2.0, Pose::identity());
  f.depth.at(0, 0) = 0.0f;
  f.depth.at(1, 0) = 200.0f;  // beyond max range
  f.dynamic_mask = Mask(16, 12);
  f.dynamic_mask->set(2, 0, true);
  EXPECT_EQ(back_project_frame(f).size(), 16u * 12 - 3);
  PosedFrame bad = f;
  bad.depth = Image(8, 8, 1, 1.0f);
  SpatialMemory m;
  const PosedFrame frames[] = {f, bad};
  EXPECT_THROW(m.fuse(frames), std::invalid_argument);
  EXPECT_TRUE(m.empty());
}

TEST(SpatialMemory, Edits) {
  std::mt19937_64 rng(13);
  SpatialMemory m(0.1);
  m.fuse_points(scenemem::testing::random_cloud(rng, 3000, -1, 1));
  const std::size_t before = m.cell_count();

  EditOp del;
  del.kind = EditOp::Kind::DeleteRegion;
  del.region = AxisBox{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  const SpatialMemory deleted = apply_edit(m, del);
  EXPECT_LT(deleted.cell_count(), before);
  for (const Vec3& p : deleted.snapshot().positions) EXPECT_FALSE(std::get<AxisBox>(del.region).contains(p));

  EditOp recolor;
  recolor.kind = EditOp::Kind::RecolorRegion;
  recolor.region = std::vector<VoxelKey>{m.sorted_keys().front()};
  recolor.color = Color(1, 0, 0);
  const SpatialMemory recolored = apply_edit(m, recolor);
  EXPECT_EQ(recolored.snapshot().colors.front(), Color(1, 0, 0));
  EXPECT_EQ(recolored.cell_count(), before);

  EditOp add;
  add.kind = EditOp::Kind::AddPrimitive;
  add.primitive.shape = Primitive::Shape::Box;
  add.primitive.half_extents = Vec3(0.2, 0.2, 0.2);
  add.primitive.pose = Pose(Mat3::Identity(), Vec3(5, 5, 5));
  const SpatialMemory added = apply_edit(m, add);
  EXPECT_GT(added.cell_count(), before);

  EditOp empty = del;
  empty.region = AxisBox{Vec3(1, 1, 1), Vec3(0, 0, 0)};
  SpatialMemory copy = m;
  EXPECT_THROW(copy.apply(empty), std::invalid_argument);
  EXPECT_TRUE(copy == m);
}

TEST(EditJson, RoundTrip) {
  const std::string docs[] = {
      R"({"kind":"delete-region","region":{"min":[0,0,0],"max":[1,2,3]}})",
      R"({"kind":"recolor-region","region":{"keys":[[1,2,3],[-1,0,4]]},"color":[0.5,0.25,1]})",
      R"({"kind":"add-primitive","primitive":{"shape":"sphere","radius":0.3,"color":[0,1,0],)"
      R"("pose":{"rotation":[1,0,0,0,1,0,0,0,1],"translation":[1,2,3]}}})"};
  for (const std::string& d : docs) {
    const EditOp op = parse_edit(d);
    EXPECT_EQ(edit_to_json(parse_edit(edit_to_json(op))), edit_to_json(op));
  }
  EXPECT_THROW(parse_edit(R"({"kind":"explode"})"), std::invalid_argument);
  EXPECT_THROW(parse_edit("{"), std::invalid_argument);
}

TEST(SpatialMemory, BinaryAndFileRoundTrip) {
  std::mt19937_64 rng(14);
  SpatialMemory m(0.07);
  m.fuse_points(scenemem::testing::random_cloud(rng, 500, -2, 2));
  std::stringstream ss;
  m.write_binary(ss);
  EXPECT_TRUE(SpatialMemory::read_binary(ss) == m);

  const auto path = std::filesystem::temp_directory_path() / "scenemem_mem_test.spcl";
  m.save(path);
  const SpatialMemory loaded = SpatialMemory::load(path);
  EXPECT_EQ(loaded.cell_count(), m.cell_count());
  EXPECT_EQ(loaded.sorted_keys(), m.sorted_keys());
}

TEST(Downsample, OnePointPerOccupiedVoxel) {
  std::mt19937_64 rng(15);
  const PointCloud c = scenemem::testing::random_cloud(rng, 4000, -1, 1);
  for (double d : {0.05, 0.2, 0.5}) {
    const PointCloud ds = downsample(c, d);
    std::set<VoxelKey> oracle;
    for (const Vec3& p : c.positions) oracle.insert(voxel_key(p, d));
    EXPECT_EQ(ds.size(), oracle.size());
    std::set<VoxelKey> seen;
    for (const Vec3& p : ds.positions) EXPECT_TRUE(seen.insert(voxel_key(p, d)).second);
  }
}
