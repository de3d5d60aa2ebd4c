// SPDX-License-Identifier: Apache-2.0
//
// Persistent spatial memory: a voxel-hashed static point cloud.
//
// Each occupied cube of side d keeps the running sums of the positions and
// colors that landed in it plus their count, so merges are associative and the
// reported centroid / mean color are sum / count.

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "scenemem/geometry.hpp"
#include "scenemem/image.hpp"

namespace scenemem {

struct VoxelKey {
  int32_t x = 0;
  int32_t y = 0;
  int32_t z = 0;
  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    uint64_t h = static_cast<uint32_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<uint32_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<uint32_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

/// floor(coordinate / d) per axis. Throws std::invalid_argument for d <= 0.
VoxelKey voxel_key(const Vec3& point, double d);

struct VoxelCell {
  Vec3 position_sum = Vec3::Zero();
  Eigen::Vector3d color_sum = Eigen::Vector3d::Zero();
  int64_t count = 0;

  Vec3 centroid() const { return position_sum / static_cast<double>(count); }
  Color mean_color() const { return (color_sum / static_cast<double>(count)).cast<float>(); }
};

/// One posed RGB-D observation to fuse.
struct PosedFrame {
  Image rgb;             // 3 channels in [0,1]
  Image depth;           // 1 channel, meters (Zc)
  std::optional<Mask> dynamic_mask;  // true = dynamic, excluded from fusion
  Pose pose;
  Intrinsics intrinsics;
};

struct FusionOptions {
  double epsilon_z = kEpsilonZ;
  /// Depths at or above this are skipped; scene rendering uses it as the background sentinel.
  double max_range = 100.0;
  /// Fuse every `stride`-th pixel in x and y.
  int pixel_stride = 1;
};

struct AxisBox {
  Vec3 min;
  Vec3 max;
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct Primitive {
  enum class Shape { Box, Sphere };
  Shape shape = Shape::Box;
  Pose pose;                          // primitive frame -> world; box/sphere centred at its origin
  Vec3 half_extents = Vec3::Zero();  // box only
  double radius = 0;                  // sphere only
  Color color = Color(0.5f, 0.5f, 0.5f);

  void validate() const;
  /// Surface samples on a grid of the given spacing (at least 1/spacing^2 per unit area).
  PointCloud sample_surface(double spacing) const;
};

struct EditOp {
  enum class Kind { DeleteRegion, AddPrimitive, RecolorRegion };
  using Region = std::variant<AxisBox, std::vector<VoxelKey>>;

  Kind kind = Kind::DeleteRegion;
  Region region;
  Primitive primitive;
  Color color = Color(0, 0, 0);

  /// Throws std::invalid_argument for an empty region or degenerate primitive.
  void validate() const;
};

/// Edit documents. Schema (all lengths in meters, colors in [0,1]):
///   {"kind": "delete-region",  "region": REGION}
///   {"kind": "recolor-region", "region": REGION, "color": [r,g,b]}
///   {"kind": "add-primitive",  "primitive": {"shape": "box"|"sphere",
///        "size": [sx,sy,sz] | "radius": r, "color": [r,g,b],
///        "pose": {"rotation": [9 row-major], "translation": [x,y,z]}}}
/// with REGION either {"min": [x,y,z], "max": [x,y,z]} or {"keys": [[i,j,k], ...]}.
EditOp parse_edit(const std::string& json_text);
std::string edit_to_json(const EditOp& op);

class SpatialMemory {
 public:
  explicit SpatialMemory(double cube_side = 0.01);

  double cube_side() const { return cube_side_; }
  std::size_t cell_count() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  const std::unordered_map<VoxelKey, VoxelCell, VoxelKeyHash>& cells() const { return cells_; }
  const VoxelCell* find(const VoxelKey& key) const;

  /// Back-projects every valid, unmasked pixel and merges it into its cell.
  /// Throws std::invalid_argument on size mismatches between rgb/depth/mask/intrinsics.
  void fuse(const PosedFrame& frame, const FusionOptions& opts = {});
  void fuse(std::span<const PosedFrame> frames, const FusionOptions& opts = {});

  /// Merges `cloud` point by point (with per-call accumulation; see fuse()).
  void fuse_points(const PointCloud& cloud);

  void apply(const EditOp& edit);

  /// One point per cell (centroid, mean color), sorted by key.
  PointCloud snapshot() const;
  std::vector<VoxelKey> sorted_keys() const;

  /// Exact state (sums and counts) for bundles.
  void write_binary(std::ostream& out) const;
  static SpatialMemory read_binary(std::istream& in);

  /// SPCL snapshot plus a JSON sidecar {"d", "cell_count", "version", "counts"}.
  void save(const std::filesystem::path& spcl_path) const;
  static SpatialMemory load(const std::filesystem::path& spcl_path);

  bool operator==(const SpatialMemory& other) const;

 private:
  void merge_cells(const std::unordered_map<VoxelKey, VoxelCell, VoxelKeyHash>& staged);

  double cube_side_;
  std::unordered_map<VoxelKey, VoxelCell, VoxelKeyHash> cells_;
};

/// Functional forms of the memory operations.
SpatialMemory fuse_frames(SpatialMemory mem, std::span<const PosedFrame> frames, const FusionOptions& opts = {});
SpatialMemory apply_edit(SpatialMemory mem, const EditOp& edit);
PointCloud snapshot(const SpatialMemory& mem);

/// One point per occupied voxel: centroid position and mean color.
/// Output is sorted by voxel key. Throws std::invalid_argument for d <= 0.
PointCloud downsample(const PointCloud& cloud, double d);

/// Back-projects the valid, unmasked pixels of a frame into a world-space cloud.
PointCloud back_project_frame(const PosedFrame& frame, const FusionOptions& opts = {});

}  // namespace scenemem
