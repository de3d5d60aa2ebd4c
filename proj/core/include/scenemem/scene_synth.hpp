// SPDX-License-Identifier: Apache-2.0
//
// Procedural rooms with ground-truth color, depth, poses and dynamic masks,
// plus assembly of training samples (target / preceding / candidate split,
// scene cloud, projections and retrieved references).

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scenemem/geometry.hpp"
#include "scenemem/image.hpp"
#include "scenemem/renderer.hpp"
#include "scenemem/retrieval.hpp"
#include "scenemem/voxel_memory.hpp"

namespace scenemem {

/// Symbolic camera instructions standing in for free-form text.
inline constexpr int kInstructionVocab = 16;
const std::array<std::string, kInstructionVocab>& instruction_names();
int instruction_id(const std::string& name);

enum class Texture : int { Solid = 0, Checker = 1, Stripes = 2 };

struct SceneObject {
  Primitive shape;
  Color secondary = Color(0, 0, 0);
  Texture texture = Texture::Solid;
  double texture_scale = 0.25;
};

struct DynamicEntity {
  SceneObject object;  // object.shape.pose is ignored; the path defines the position
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();

  Vec3 position(double time, double duration) const;
};

struct SceneSpec {
  uint64_t seed = 0;
  AxisBox room;
  std::array<Color, 6> wall_colors;  // -x, +x, -y (ceiling), +y (floor), -z, +z
  std::array<Color, 6> wall_secondary;
  double wall_checker = 0.5;
  std::vector<SceneObject> statics;
  std::vector<DynamicEntity> dynamics;
  int instruction = 0;
  double duration = 10.0;
  /// Primitives keep out of a vertical cylinder of this radius around the origin.
  double keep_out_radius = 1.0;
  Color background = Color(0.0f, 0.0f, 0.0f);
  double max_range = 100.0;

  /// Throws std::invalid_argument if anything leaves the room at any time.
  void check_containment() const;
};

struct SceneParams {
  Vec3 min_room = Vec3(4.0, 2.6, 4.0);
  Vec3 max_room = Vec3(6.0, 3.2, 6.0);
  int num_static = 6;
  int num_dynamic = 1;
  double duration = 10.0;
  double keep_out_radius = 1.0;
  /// Camera height below the ceiling (world +Y is down; the eye sits at y = 0).
  double eye_height = 1.4;

  void validate() const;
};

std::string scene_params_to_json(const SceneParams& p);
/// Missing fields keep their defaults. Throws std::invalid_argument if the result is invalid.
SceneParams scene_params_from_json(const std::string& text);

/// Deterministic in `seed`. Throws std::invalid_argument for degenerate extents.
SceneSpec generate_scene(uint64_t seed, const SceneParams& params = {});

struct GtFrame {
  Image rgb;
  Image depth;        // Zc in meters, max_range where the ray escapes
  Mask dynamic_mask;  // true on pixels covered by a dynamic entity
};

/// Ray-cast render. Throws std::invalid_argument for time outside [0, duration].
GtFrame render_gt(const SceneSpec& scene, const Pose& cam, const Intrinsics& intr, double time);

/// Static geometry only (dynamic entities ignored); what the spatial memory should converge to.
GtFrame render_gt_static(const SceneSpec& scene, const Pose& cam, const Intrinsics& intr);

struct SweepParams {
  double yaw_amplitude = 0.5;    // radians at the turning point
  double lateral_shift = 0.4;    // meters at the turning point
  double forward_shift = 0.0;    // meters at the turning point
};

/// Camera pose at sweep phase s in [0,1]: s = 0 is `start`, s = 1 the turning point.
Pose sweep_pose(const Pose& start, const SweepParams& sweep, double s);

/// `clips` clips of `clip_len` frames; every pair goes out to the turning point
/// and back, so frame index 2*k*clip_len - 1 reproduces `start` exactly.
Trajectory out_and_back(const Pose& start, const Intrinsics& intr, const SweepParams& sweep, int clips,
                        int clip_len);

/// Palindromic video of `length` frames: out to the turning point and back.
Trajectory palindromic_sweep(const Pose& start, const Intrinsics& intr, const SweepParams& sweep, int length);

/// A start pose inside the keep-out cylinder with a random heading.
Pose random_start_pose(const SceneSpec& scene, std::mt19937_64& rng);
SweepParams random_sweep(std::mt19937_64& rng);

/// Instruction id describing the camera motion over a trajectory segment.
int classify_motion(std::span<const CameraView> segment);

struct VideoSplit {
  std::vector<int> target;     // N contiguous indices
  std::vector<int> preceding;  // the M indices right before target
  std::vector<int> candidates; // everything else, ascending
};

/// Target window start is uniform in [M, len - N]. Throws std::invalid_argument if len < N + M.
VideoSplit split_video(int length, int n_target, int m_preceding, std::mt19937_64& rng);
VideoSplit split_video_at(int length, int n_target, int m_preceding, int target_start);

struct SampleConfig {
  int n_target = 9;
  int m_preceding = 3;
  double cube_side = 0.01;
  int splat_radius = kDefaultSplatRadius;
  double frame_dt = 0.1;
  /// Build the scene cloud from every candidate frame instead of one sampled frame.
  bool fuse_all_candidates = false;
  RetrievalConfig retrieval;
};

struct TrainingSample {
  std::vector<GtFrame> frames;  // full source video
  Trajectory cameras;           // one per frame
  VideoSplit split;
  int source_frame = -1;        // candidate frame the scene cloud was built from
  PointCloud scene_cloud;       // static-only, world frame
  ProjectionVideo projections;  // one per frame
  std::vector<int> references;  // frame indices, subset of split.candidates
  int instruction = 0;
};

/// Throws std::invalid_argument if the trajectory is shorter than N + M.
TrainingSample assemble_sample(const SceneSpec& scene, const Trajectory& trajectory, const SampleConfig& cfg,
                               std::mt19937_64& rng);

/// Writes a sample directory: frames/*.png, depth/*.npy, mask/*.png,
/// projections/*.png, poses.json and sample.json.
void write_sample(const std::filesystem::path& dir, const TrainingSample& sample);

inline constexpr int kDatasetVersion = 1;

}  // namespace scenemem
