// SPDX-License-Identifier: Apache-2.0

#include "scenemem/renderer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "scenemem/io.hpp"

namespace scenemem {

void validate_trajectory(std::span<const CameraView> traj) {
  if (traj.empty()) throw std::invalid_argument("trajectory must contain at least one camera");
  for (const CameraView& v : traj) {
    v.intrinsics.validate();
    if (v.intrinsics.width != traj.front().intrinsics.width || v.intrinsics.height != traj.front().intrinsics.height) {
      throw std::invalid_argument("trajectory cameras must share image size");
    }
  }
}

ProjectionImage render_projection(const PointCloud& cloud, const Pose& cam, const Intrinsics& intr,
                                  int splat_radius) {
  if (splat_radius < 0) throw std::invalid_argument("render_projection: negative splat radius");
  intr.validate();
  const int w = intr.width, h = intr.height;
  ProjectionImage out{Image(w, h, 3), Mask(w, h), Image(w, h, 1), std::vector<int32_t>(std::size_t(w) * h, -1)};
  std::vector<double> zbuf(std::size_t(w) * h, std::numeric_limits<double>::infinity());
  const int r2 = splat_radius * splat_radius;
  const Mat3 rt = cam.rotation().transpose();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 pc = rt * (cloud.positions[i] - cam.translation());
    const auto proj = project_camera(pc, intr);
    if (!proj) continue;
    const double u = std::floor(proj->pixel.x() + 0.5);
    const double v = std::floor(proj->pixel.y() + 0.5);
    if (u < -splat_radius || v < -splat_radius || u >= w + splat_radius || v >= h + splat_radius) continue;
    const int cu = static_cast<int>(u), cv = static_cast<int>(v);
    for (int dy = -splat_radius; dy <= splat_radius; ++dy) {
      const int y = cv + dy;
      if (y < 0 || y >= h) continue;
      for (int dx = -splat_radius; dx <= splat_radius; ++dx) {
        const int x = cu + dx;
        if (x < 0 || x >= w || dx * dx + dy * dy > r2) continue;
        const std::size_t p = std::size_t(y) * w + x;
        // Strict comparison: on equal depth the earlier (lower) index stays.
        if (proj->depth < zbuf[p]) {
          zbuf[p] = proj->depth;
          out.winner[p] = static_cast<int32_t>(i);
        }
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = std::size_t(y) * w + x;
      const int32_t idx = out.winner[p];
      if (idx < 0) continue;
      out.valid.set(x, y, true);
      out.rgb.set_rgb(x, y, cloud.colors[idx]);
      out.depth.at(x, y) = static_cast<float>(zbuf[p]);
    }
  }
  return out;
}

ProjectionVideo render_sequence(const PointCloud& cloud, std::span<const CameraView> traj, int splat_radius) {
  validate_trajectory(traj);
  ProjectionVideo video;
  video.reserve(traj.size());
  for (const CameraView& v : traj) video.push_back(render_projection(cloud, v.pose, v.intrinsics, splat_radius));
  return video;
}

PointCloud visible_subcloud(const PointCloud& cloud, const ProjectionImage& view, const Pose& cam) {
  std::vector<uint8_t> seen(cloud.size(), 0);
  for (int32_t idx : view.winner) {
    if (idx >= 0) seen[idx] = 1;
  }
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (seen[i]) out.push_back(cam.apply_inverse(cloud.positions[i]), cloud.colors[i]);
  }
  return out;
}

void write_projection_video(const std::filesystem::path& dir, const ProjectionVideo& video) {
  std::filesystem::create_directories(dir);
  std::vector<float> tensor;
  std::size_t h = 0, w = 0;
  char name[64];
  for (std::size_t i = 0; i < video.size(); ++i) {
    const ProjectionImage& f = video[i];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
    write_png(dir / name, f.rgb);
    std::snprintf(name, sizeof(name), "valid_%04zu.png", i);
    write_mask_png(dir / name, f.valid);
    tensor.insert(tensor.end(), f.rgb.data.begin(), f.rgb.data.end());
    h = f.rgb.height;
    w = f.rgb.width;
  }
  write_npy(dir / "projection.npy", {video.size(), h, w, 3}, tensor);
}

}  // namespace scenemem
