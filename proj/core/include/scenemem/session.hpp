// SPDX-License-Identifier: Apache-2.0
//
// The iterative generate-and-remember loop. A session owns the spatial memory
// and the archive of frames; every step renders the memory along the requested
// trajectory, retrieves reference frames from the archive, generates a clip
// and fuses it back. Steps are transactional: on any failure the state is
// left exactly as it was.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scenemem/clip_generator.hpp"
#include "scenemem/geometry.hpp"
#include "scenemem/image.hpp"
#include "scenemem/retrieval.hpp"
#include "scenemem/scene_synth.hpp"
#include "scenemem/voxel_memory.hpp"

namespace scenemem {

struct SessionConfig {
  int clip_len = 9;
  int preceding = 3;
  double cube_side = 0.01;
  int splat_radius = kDefaultSplatRadius;
  RetrievalConfig retrieval;
  /// Search only the most recent archive frames; 0 searches everything.
  int retrieval_window = 0;
  /// Allowed jump between the last archived pose and the first requested pose.
  double max_gap_translation = 0.5;
  double max_gap_rotation = 0.6;
  double frame_dt = 0.1;
  double max_range = 100.0;
  uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static SessionConfig from_json(const std::string& text);
  bool operator==(const SessionConfig&) const = default;
};

/// Evaluation sessions know the synthetic scene (regenerated from seed and
/// parameters) and take depth and dynamic masks from it; freeform sessions
/// place generated pixels at the depth the memory renders there and treat
/// them as static.
enum class SessionMode { Freeform, Evaluation };

struct ArchiveFrame {
  Image rgb;
  CameraView camera;
  Mask dynamic_mask;
  int clip = 0;  // 0 for the initial frame, k for frames produced by step k
};

struct StepRequest {
  Trajectory trajectory;
  int instruction = 0;
  std::vector<EditOp> edits;
};

class Session {
 public:
  /// From an image with depth and pose. Throws std::invalid_argument if depth is missing or mismatched.
  static Session create_from_frame(const PosedFrame& init, const SessionConfig& cfg);
  /// From a synthetic scene, rendered at `start` (evaluation mode).
  static Session create_from_scene(uint64_t scene_seed, const SceneParams& params, const Pose& start,
                                   const Intrinsics& intr, const SessionConfig& cfg);

  const SessionConfig& config() const { return cfg_; }
  SessionMode mode() const { return mode_; }
  const SpatialMemory& memory() const { return memory_; }
  const std::vector<ArchiveFrame>& archive() const { return archive_; }
  int clip_index() const { return clip_index_; }
  const SceneSpec* scene() const { return scene_.get(); }
  /// Archive frames of clip k (k = 0 is the initial frame).
  std::vector<const ArchiveFrame*> clip_frames(int k) const;

  /// Generates and commits one clip; returns it. Throws std::invalid_argument
  /// for malformed requests; any exception leaves the session unchanged.
  std::vector<Image> step(const StepRequest& req, const ClipGenerator& generator);
  /// Applies an edit to the memory. Throws std::invalid_argument (state unchanged) if invalid.
  void edit(const EditOp& op);

  /// The request the session would hand to a generator for `traj`, without committing anything.
  ClipRequest prepare(const StepRequest& req) const;

  /// Bundle: "SMBN", u32 version, u64 header length, JSON header, u64 memory
  /// length, memory in its binary form, per archive frame the f32 RGB plane
  /// and the u8 mask plane, then the u64 FNV-1a of everything before it.
  std::string export_bundle() const;
  /// Throws FormatError for truncated, corrupt or version-mismatched bundles.
  static Session import_bundle(const std::string& bytes);
  /// FNV-1a of the bundle contents (the bundle trailer).
  uint64_t checksum() const;

 private:
  Session() = default;
  void validate_request(const StepRequest& req) const;
  void fuse_generated(const std::vector<Image>& frames, const Trajectory& traj, const PointCloud& snapshot_cloud,
                      std::size_t first_index);
  double frame_time(std::size_t archive_index) const;

  SessionConfig cfg_;
  SessionMode mode_ = SessionMode::Freeform;
  std::optional<uint64_t> scene_seed_;
  SceneParams scene_params_;
  std::shared_ptr<const SceneSpec> scene_;
  SpatialMemory memory_;
  std::vector<ArchiveFrame> archive_;
  int clip_index_ = 0;
};

inline constexpr uint32_t kBundleVersion = 1;

uint64_t fnv1a(const void* data, std::size_t size, uint64_t seed = 0xcbf29ce484222325ull);

/// Trajectory documents: [{"rotation": [9 row-major], "translation": [x,y,z],
/// "intrinsics": {"fx","fy","cx","cy","width","height"}}, ...].
std::string trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const std::string& text);

/// {"trajectory": [...], "instruction": id | name, "edits": [edit, ...]}.
StepRequest parse_step_request(const std::string& text);
std::string step_request_to_json(const StepRequest& req);


}  // namespace scenemem
