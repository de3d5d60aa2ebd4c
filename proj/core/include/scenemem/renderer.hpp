// SPDX-License-Identifier: Apache-2.0
//
// Z-buffered point splatting of scene clouds into projection images.

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "scenemem/geometry.hpp"
#include "scenemem/image.hpp"

namespace scenemem {

/// Rendered view of a cloud. rgb is zero and depth is zero wherever `valid` is false.
struct ProjectionImage {
  Image rgb;    // 3 channels
  Mask valid;
  Image depth;  // 1 channel, meters
  /// Index of the winning point per pixel, -1 where invalid.
  std::vector<int32_t> winner;
};

using ProjectionVideo = std::vector<ProjectionImage>;

struct CameraView {
  Pose pose;
  Intrinsics intrinsics;
};

/// One camera per output frame; all intrinsics share width/height.
using Trajectory = std::vector<CameraView>;

/// Throws std::invalid_argument for an empty trajectory or mixed image sizes.
void validate_trajectory(std::span<const CameraView> traj);

inline constexpr int kDefaultSplatRadius = 1;

/// Each point covers the pixels within `splat_radius` of its rounded projection.
/// A pixel keeps the nearest point; equal depths keep the lower point index.
ProjectionImage render_projection(const PointCloud& cloud, const Pose& cam, const Intrinsics& intr,
                                  int splat_radius = kDefaultSplatRadius);

ProjectionVideo render_sequence(const PointCloud& cloud, std::span<const CameraView> traj,
                                int splat_radius = kDefaultSplatRadius);

/// Points that won at least one pixel, expressed in the camera frame, in index order.
PointCloud visible_subcloud(const PointCloud& cloud, const ProjectionImage& view, const Pose& cam);

/// Writes frame_%04d.png, valid_%04d.png (1-bit) and a float32 tensor
/// projection.npy of shape (frames, height, width, 3) into `dir`.
void write_projection_video(const std::filesystem::path& dir, const ProjectionVideo& video);

}  // namespace scenemem
