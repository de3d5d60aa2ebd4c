// SPDX-License-Identifier: Apache-2.0

#include "scenemem/retrieval.hpp"

#include <algorithm>
#include <stdexcept>

namespace scenemem {

void RetrievalConfig::validate() const {
  if (max_refs < 1) throw std::invalid_argument("retrieval: max_refs must be >= 1");
  if (stride < 1) throw std::invalid_argument("retrieval: stride must be >= 1");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("retrieval: epsilon must lie in [0,1]");
  if (!(iou_cube_side > 0)) throw std::invalid_argument("retrieval: iou_cube_side must be positive");
}

std::vector<VoxelKey> occupied_keys(const PointCloud& cloud, double d) {
  std::vector<VoxelKey> keys;
  keys.reserve(cloud.size());
  for (const Vec3& p : cloud.positions) keys.push_back(voxel_key(p, d));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

double voxel_iou(std::span<const VoxelKey> a, std::span<const VoxelKey> b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double voxel_iou(const PointCloud& a, const PointCloud& b, double d) {
  const auto ka = occupied_keys(a, d);
  const auto kb = occupied_keys(b, d);
  return voxel_iou(ka, kb);
}

double spatial_overlap(const PointCloud& x, const PointCloud& y, const Pose& y_to_x, double d) {
  return voxel_iou(x, transform_cloud(y, y_to_x), d);
}

double spatial_overlap(const ViewCloud& x, const ViewCloud& y, double d) {
  return spatial_overlap(x.cloud, y.cloud, compose(invert(x.pose), y.pose), d);
}

RetrievalResult retrieve_references_detailed(std::span<const ViewCloud> targets,
                                             std::span<const ViewCloud> candidates, const RetrievalConfig& cfg) {
  cfg.validate();
  RetrievalResult res;
  if (candidates.empty()) return res;
  for (std::size_t i = 0; i < targets.size(); i += static_cast<std::size_t>(cfg.stride)) {
    const ViewCloud& target = targets[i];
    const auto target_keys = occupied_keys(target.cloud, cfg.iou_cube_side);
    const Pose world_to_target = invert(target.pose);
    double best = 0.0;
    int best_id = -1;
    for (const ViewCloud& cand : candidates) {
      const PointCloud registered = transform_cloud(cand.cloud, compose(world_to_target, cand.pose));
      const double s = voxel_iou(target_keys, occupied_keys(registered, cfg.iou_cube_side));
      if (s > best || (s == best && best_id >= 0 && cand.id < best_id)) {
        best = s;
        best_id = cand.id;
      }
    }
    res.probed_targets.push_back(static_cast<int>(i));
    res.best_candidate.push_back(best_id);
    res.best_score.push_back(best);
    if (best_id >= 0 && best > cfg.epsilon &&
        std::find(res.ids.begin(), res.ids.end(), best_id) == res.ids.end() &&
        static_cast<int>(res.ids.size()) < cfg.max_refs) {
      res.ids.push_back(best_id);
    }
  }
  return res;
}

std::vector<int> retrieve_references(std::span<const ViewCloud> targets, std::span<const ViewCloud> candidates,
                                     const RetrievalConfig& cfg) {
  return retrieve_references_detailed(targets, candidates, cfg).ids;
}

}  // namespace scenemem
