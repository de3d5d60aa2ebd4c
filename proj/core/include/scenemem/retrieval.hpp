// SPDX-License-Identifier: Apache-2.0
//
// Reference-frame retrieval by 3D overlap of view-specific scene clouds.
//
// Overlap between two views is the IoU of their occupied voxel sets after
// registering the candidate cloud into the target view's frame.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scenemem/geometry.hpp"
#include "scenemem/voxel_memory.hpp"

namespace scenemem {

struct RetrievalConfig {
  /// Maximum number of returned references.
  int max_refs = 7;
  /// Probe every `stride`-th target frame. Defaults to max_refs, as in the reference procedure.
  int stride = 7;
  /// A probe's best candidate is kept only if its overlap is strictly above this.
  double epsilon = 0.05;
  double iou_cube_side = 0.01;

  /// Throws std::invalid_argument on K < 1, epsilon outside [0,1], or cube side <= 0.
  void validate() const;
  bool operator==(const RetrievalConfig&) const = default;
};

/// A view-specific cloud: the scene points seen from one camera, in that camera's frame.
struct ViewCloud {
  int id = 0;
  PointCloud cloud;  // camera coordinates
  Pose pose;         // camera -> world
};

/// Sorted, de-duplicated occupied voxel keys.
std::vector<VoxelKey> occupied_keys(const PointCloud& cloud, double d);

/// |A ∩ B| / |A ∪ B| over occupied voxel sets; 0 when both are empty.
double voxel_iou(const PointCloud& a, const PointCloud& b, double d);
double voxel_iou(std::span<const VoxelKey> a, std::span<const VoxelKey> b);

/// voxel_iou(x, transform_cloud(y, y_to_x), d).
double spatial_overlap(const PointCloud& x, const PointCloud& y, const Pose& y_to_x, double d);
double spatial_overlap(const ViewCloud& x, const ViewCloud& y, double d);

struct RetrievalResult {
  std::vector<int> ids;
  /// For each probed target index: the best candidate id (-1 if none) and its score.
  std::vector<int> probed_targets;
  std::vector<int> best_candidate;
  std::vector<double> best_score;
};

/// Probes target indices 0, stride, 2*stride, ...; for each, picks the
/// candidate with maximal overlap (ties go to the lowest candidate id) and
/// keeps it iff the score exceeds epsilon. Result ids are de-duplicated in
/// order of first inclusion and capped at max_refs.
RetrievalResult retrieve_references_detailed(std::span<const ViewCloud> targets,
                                             std::span<const ViewCloud> candidates, const RetrievalConfig& cfg);

std::vector<int> retrieve_references(std::span<const ViewCloud> targets, std::span<const ViewCloud> candidates,
                                     const RetrievalConfig& cfg);

}  // namespace scenemem
