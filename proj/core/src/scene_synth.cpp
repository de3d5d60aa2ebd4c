// SPDX-License-Identifier: Apache-2.0

#include "scenemem/scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "scenemem/io.hpp"

namespace scenemem {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Color random_color(std::mt19937_64& rng) {
  // Saturated hue with moderate brightness so textures stay visible.
  const double h = uniform(rng, 0.0, 6.0);
  const double v = uniform(rng, 0.55, 0.95), s = uniform(rng, 0.45, 0.9);
  const double c = v * s, x = c * (1 - std::abs(std::fmod(h, 2.0) - 1)), m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  return Color(float(r + m), float(g + m), float(b + m));
}

Color shade_variant(const Color& c, double f) { return (c * float(f)).cwiseMin(1.0f); }

Color texture_color(const SceneObject& o, const Vec3& local) {
  if (o.texture == Texture::Solid) return o.shape.color;
  const double s = o.texture_scale;
  long parity = 0;
  if (o.texture == Texture::Checker) {
    parity = static_cast<long>(std::floor(local.x() / s) + std::floor(local.y() / s) + std::floor(local.z() / s));
  } else {
    parity = static_cast<long>(std::floor(local.y() / s));
  }
  return (parity & 1) ? o.secondary : o.shape.color;
}

// Lambert-like view-independent shading so that faces stay distinguishable.
float shading(const Vec3& normal) {
  static const Vec3 light = Vec3(0.4, -0.8, 0.45).normalized();
  return static_cast<float>(0.65 + 0.35 * std::abs(normal.dot(light)));
}

struct Hit {
  double t = kInf;
  Color color = Color::Zero();
  bool dynamic = false;
};

// Ray/box slab test in the box frame. Returns entry distance (> eps) or inf, and the entry normal.
double intersect_box(const Vec3& o, const Vec3& d, const Vec3& half, Vec3& normal, bool from_inside) {
  double tmin = -kInf, tmax = kInf;
  int amin = 0, amax = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < -half[a] || o[a] > half[a]) return kInf;
      continue;
    }
    double t1 = (-half[a] - o[a]) / d[a], t2 = (half[a] - o[a]) / d[a];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > tmin) { tmin = t1; amin = a; }
    if (t2 < tmax) { tmax = t2; amax = a; }
  }
  if (tmax < tmin || tmax <= 1e-9) return kInf;
  if (tmin > 1e-9 && !from_inside) {
    normal = Vec3::Zero();
    normal[amin] = d[amin] > 0 ? -1 : 1;
    return tmin;
  }
  if (from_inside || tmin <= 1e-9) {
    if (!from_inside) return kInf;  // origin inside a solid object: ignore it
    normal = Vec3::Zero();
    normal[amax] = d[amax] > 0 ? -1 : 1;
    return tmax;
  }
  return kInf;
}

double intersect_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
  const Vec3 oc = o - c;
  const double a = d.squaredNorm(), b = oc.dot(d), cc = oc.squaredNorm() - r * r;
  const double disc = b * b - a * cc;
  if (disc < 0) return kInf;
  const double sq = std::sqrt(disc);
  const double t1 = (-b - sq) / a;
  if (t1 > 1e-9) return t1;
  return kInf;  // origin inside or sphere behind
}

void hit_object(const SceneObject& obj, const Pose& pose, const Vec3& o, const Vec3& d, bool dynamic, Hit& best) {
  const Primitive& p = obj.shape;
  if (p.shape == Primitive::Shape::Sphere) {
    const double t = intersect_sphere(o, d, pose.translation(), p.radius);
    if (t < best.t) {
      const Vec3 hit = o + t * d;
      const Vec3 n = (hit - pose.translation()).normalized();
      best = {t, texture_color(obj, pose.apply_inverse(hit)) * shading(n), dynamic};
    }
    return;
  }
  const Vec3 lo = pose.rotation().transpose() * (o - pose.translation());
  const Vec3 ld = pose.rotation().transpose() * d;
  Vec3 ln;
  const double t = intersect_box(lo, ld, p.half_extents, ln, false);
  if (t < best.t) {
    best = {t, texture_color(obj, lo + t * ld) * shading(pose.rotation() * ln), dynamic};
  }
}

GtFrame render(const SceneSpec& scene, const Pose& cam, const Intrinsics& intr, double time, bool with_dynamics) {
  intr.validate();
  const int w = intr.width, h = intr.height;
  GtFrame out{Image(w, h, 3), Image(w, h, 1), Mask(w, h)};
  const Vec3 room_center = 0.5 * (scene.room.min + scene.room.max);
  const Vec3 room_half = 0.5 * (scene.room.max - scene.room.min);
  std::vector<Pose> dyn_poses;
  for (const DynamicEntity& e : scene.dynamics) {
    dyn_poses.push_back(Pose::unchecked(Mat3::Identity(), e.position(time, scene.duration)));
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Unnormalised camera ray with unit z, so the hit distance is Zc.
      const Vec3 dc((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
      const Vec3 o = cam.translation();
      const Vec3 d = cam.rotation() * dc;
      Hit best;
      // Room shell, seen from inside (or from outside when the camera leaves the room).
      {
        const Vec3 lo = o - room_center;
        const bool inside = (lo.cwiseAbs().array() < room_half.array()).all();
        Vec3 n;
        const double t = intersect_box(lo, d, room_half, n, inside);
        if (t < best.t) {
          const Vec3 hit = o + t * d;
          int face = 0;
          for (int a = 0; a < 3; ++a) {
            if (n[a] != 0) face = 2 * a + (inside ? (n[a] < 0 ? 1 : 0) : (n[a] > 0 ? 1 : 0));
          }
          const double s = scene.wall_checker;
          const long parity =
              static_cast<long>(std::floor(hit.x() / s) + std::floor(hit.y() / s) + std::floor(hit.z() / s));
          const Color c = (parity & 1) ? scene.wall_secondary[face] : scene.wall_colors[face];
          best = {t, c * shading(n), false};
        }
      }
      for (const SceneObject& obj : scene.statics) hit_object(obj, obj.shape.pose, o, d, false, best);
      if (with_dynamics) {
        for (std::size_t i = 0; i < scene.dynamics.size(); ++i) {
          hit_object(scene.dynamics[i].object, dyn_poses[i], o, d, true, best);
        }
      }
      if (best.t == kInf || best.t >= scene.max_range) {
        out.rgb.set_rgb(x, y, scene.background);
        out.depth.at(x, y) = static_cast<float>(scene.max_range);
      } else {
        out.rgb.set_rgb(x, y, best.color.cwiseMax(0.0f).cwiseMin(1.0f));
        out.depth.at(x, y) = static_cast<float>(best.t);
        out.dynamic_mask.set(x, y, best.dynamic);
      }
    }
  }
  return out;
}

bool inside_room(const AxisBox& room, const Vec3& p, double margin) {
  return (p.array() - margin >= room.min.array()).all() && (p.array() + margin <= room.max.array()).all();
}

double segment_xz_distance(const Vec3& a, const Vec3& b) {
  const Eigen::Vector2d pa(a.x(), a.z()), pb(b.x(), b.z());
  const Eigen::Vector2d ab = pb - pa;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp(-pa.dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (pa + t * ab).norm();
}

}  // namespace

const std::array<std::string, kInstructionVocab>& instruction_names() {
  static const std::array<std::string, kInstructionVocab> names = {
      "static",      "pan-left",   "pan-right", "pan-left-return", "pan-right-return", "truck-left",
      "truck-right", "dolly-in",   "dolly-out", "orbit-left",      "orbit-right",      "tilt-up",
      "tilt-down",   "enter-door", "look-around", "free"};
  return names;
}

int instruction_id(const std::string& name) {
  const auto& names = instruction_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown instruction '" + name + "'");
  return static_cast<int>(it - names.begin());
}

Vec3 DynamicEntity::position(double time, double duration) const {
  const double a = duration > 0 ? std::clamp(time / duration, 0.0, 1.0) : 0.0;
  return start + a * (end - start);
}

void SceneSpec::check_containment() const {
  for (const SceneObject& o : statics) {
    const Primitive& p = o.shape;
    if (p.shape == Primitive::Shape::Sphere) {
      if (!inside_room(room, p.pose.translation(), p.radius)) throw std::invalid_argument("sphere leaves the room");
      continue;
    }
    for (int i = 0; i < 8; ++i) {
      const Vec3 corner((i & 1 ? 1 : -1) * p.half_extents.x(), (i & 2 ? 1 : -1) * p.half_extents.y(),
                        (i & 4 ? 1 : -1) * p.half_extents.z());
      if (!inside_room(room, p.pose.apply(corner), 0.0)) throw std::invalid_argument("box leaves the room");
    }
  }
  // Linear paths: the endpoints bound every intermediate position.
  for (const DynamicEntity& e : dynamics) {
    const double r = e.object.shape.shape == Primitive::Shape::Sphere ? e.object.shape.radius
                                                                       : e.object.shape.half_extents.norm();
    if (!inside_room(room, e.start, r) || !inside_room(room, e.end, r)) {
      throw std::invalid_argument("dynamic entity leaves the room");
    }
  }
}

void SceneParams::validate() const {
  if (!(min_room.minCoeff() > 0) || !((max_room - min_room).minCoeff() >= 0)) {
    throw std::invalid_argument("scene: degenerate room extents");
  }
  if (!(eye_height > 0 && eye_height < min_room.y())) throw std::invalid_argument("scene: eye height outside room");
  if (!(keep_out_radius >= 0) || 2 * keep_out_radius >= std::min(min_room.x(), min_room.z())) {
    throw std::invalid_argument("scene: keep-out cylinder does not fit the room");
  }
  if (num_static < 1 || num_dynamic < 0) throw std::invalid_argument("scene: need at least one static primitive");
  if (!(duration > 0)) throw std::invalid_argument("scene: duration must be positive");
}

SceneSpec generate_scene(uint64_t seed, const SceneParams& params) {
  params.validate();
  std::mt19937_64 rng(seed);
  SceneSpec s;
  s.seed = seed;
  s.duration = params.duration;
  s.keep_out_radius = params.keep_out_radius;
  const Vec3 size(uniform(rng, params.min_room.x(), params.max_room.x()),
                  uniform(rng, params.min_room.y(), params.max_room.y()),
                  uniform(rng, params.min_room.z(), params.max_room.z()));
  s.room.min = Vec3(-size.x() / 2, params.eye_height - size.y(), -size.z() / 2);
  s.room.max = Vec3(size.x() / 2, params.eye_height, size.z() / 2);
  for (int i = 0; i < 6; ++i) {
    s.wall_colors[i] = random_color(rng);
    s.wall_secondary[i] = shade_variant(s.wall_colors[i], uniform(rng, 0.35, 0.7));
  }
  s.instruction = static_cast<int>(rng() % kInstructionVocab);

  auto random_object = [&](bool allow_box) {
    SceneObject o;
    o.shape.color = random_color(rng);
    o.secondary = rng() % 2 ? shade_variant(o.shape.color, uniform(rng, 0.3, 0.6)) : random_color(rng);
    o.texture = static_cast<Texture>(rng() % 3);
    o.texture_scale = uniform(rng, 0.08, 0.2);
    if (allow_box && rng() % 10 < 7) {
      o.shape.shape = Primitive::Shape::Box;
      o.shape.half_extents = Vec3(uniform(rng, 0.15, 0.45), uniform(rng, 0.15, 0.6), uniform(rng, 0.15, 0.45));
    } else {
      o.shape.shape = Primitive::Shape::Sphere;
      o.shape.radius = uniform(rng, 0.15, 0.4);
    }
    return o;
  };
  auto bound_xz = [](const Primitive& p) {
    return p.shape == Primitive::Shape::Sphere ? p.radius : std::hypot(p.half_extents.x(), p.half_extents.z());
  };
  auto bound_y = [](const Primitive& p) { return p.shape == Primitive::Shape::Sphere ? p.radius : p.half_extents.y(); };

  for (int k = 0; k < params.num_static; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      SceneObject o = random_object(true);
      const double bxz = bound_xz(o.shape), by = bound_y(o.shape);
      const double x = uniform(rng, s.room.min.x() + bxz, s.room.max.x() - bxz);
      const double z = uniform(rng, s.room.min.z() + bxz, s.room.max.z() - bxz);
      if (std::hypot(x, z) < s.keep_out_radius + bxz) continue;
      // Rest on the floor most of the time, otherwise float at a random height.
      const double y = rng() % 4 ? s.room.max.y() - by : uniform(rng, s.room.min.y() + by, s.room.max.y() - by);
      const Mat3 r = o.shape.shape == Primitive::Shape::Box ? rotation_y(uniform(rng, 0, kPi)) : Mat3::Identity();
      o.shape.pose = Pose(r, Vec3(x, y, z));
      s.statics.push_back(o);
      break;
    }
  }
  if (s.statics.empty()) {
    // Fallback that always fits: a small cube against the +z wall.
    SceneObject o = random_object(false);
    o.shape.shape = Primitive::Shape::Box;
    o.shape.half_extents = Vec3(0.15, 0.15, 0.15);
    o.shape.pose = Pose(Mat3::Identity(), Vec3(0, s.room.max.y() - 0.15, s.room.max.z() - 0.2));
    s.statics.push_back(o);
  }

  for (int k = 0; k < params.num_dynamic; ++k) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      DynamicEntity e;
      e.object = random_object(false);
      const double r = e.object.shape.radius;
      auto sample_point = [&] {
        return Vec3(uniform(rng, s.room.min.x() + r, s.room.max.x() - r), s.room.max.y() - r - uniform(rng, 0.0, 0.5),
                    uniform(rng, s.room.min.z() + r, s.room.max.z() - r));
      };
      e.start = sample_point();
      e.end = sample_point();
      if (segment_xz_distance(e.start, e.end) < s.keep_out_radius + r) continue;
      s.dynamics.push_back(e);
      break;
    }
  }
  s.check_containment();
  return s;
}

GtFrame render_gt(const SceneSpec& scene, const Pose& cam, const Intrinsics& intr, double time) {
  if (!(time >= 0 && time <= scene.duration)) throw std::invalid_argument("render_gt: time outside scene duration");
  return render(scene, cam, intr, time, true);
}

GtFrame render_gt_static(const SceneSpec& scene, const Pose& cam, const Intrinsics& intr) {
  return render(scene, cam, intr, 0.0, false);
}

Pose sweep_pose(const Pose& start, const SweepParams& sweep, double s) {
  const Mat3 r = start.rotation() * rotation_y(s * sweep.yaw_amplitude);
  const Vec3 t = start.translation() + start.rotation() * Vec3(s * sweep.lateral_shift, 0.0, s * sweep.forward_shift);
  return Pose::unchecked(r, t);
}

Trajectory out_and_back(const Pose& start, const Intrinsics& intr, const SweepParams& sweep, int clips,
                        int clip_len) {
  if (clips < 1 || clip_len < 1) throw std::invalid_argument("out_and_back: need clips >= 1 and clip_len >= 1");
  Trajectory traj;
  for (int c = 0; c < clips; ++c) {
    const bool outward = c % 2 == 0;
    for (int k = 1; k <= clip_len; ++k) {
      const double s = outward ? double(k) / clip_len : double(clip_len - k) / clip_len;
      traj.push_back({sweep_pose(start, sweep, s), intr});
    }
  }
  return traj;
}

Trajectory palindromic_sweep(const Pose& start, const Intrinsics& intr, const SweepParams& sweep, int length) {
  if (length < 1) throw std::invalid_argument("palindromic_sweep: empty");
  Trajectory traj;
  const double half = 0.5 * (length - 1);
  for (int f = 0; f < length; ++f) {
    const double s = half > 0 ? 1.0 - std::abs(f - half) / half : 0.0;
    traj.push_back({sweep_pose(start, sweep, s), intr});
  }
  return traj;
}

Pose random_start_pose(const SceneSpec& scene, std::mt19937_64& rng) {
  const double r = 0.3 * scene.keep_out_radius * std::sqrt(uniform(rng, 0, 1));
  const double a = uniform(rng, 0, 2 * kPi);
  const double yaw = uniform(rng, 0, 2 * kPi);
  return Pose(rotation_y(yaw), Vec3(r * std::cos(a), 0.0, r * std::sin(a)));
}

SweepParams random_sweep(std::mt19937_64& rng) {
  SweepParams p;
  p.yaw_amplitude = (rng() % 2 ? 1 : -1) * uniform(rng, 0.3, 0.7);
  p.lateral_shift = uniform(rng, -0.3, 0.3);
  p.forward_shift = uniform(rng, -0.2, 0.2);
  return p;
}

int classify_motion(std::span<const CameraView> segment) {
  if (segment.size() < 2) return instruction_id("static");
  const Mat3 r0t = segment.front().pose.rotation().transpose();
  std::vector<double> yaw;
  double max_shift = 0;
  for (const CameraView& v : segment) {
    const Vec3 f = r0t * v.pose.rotation().col(2);
    yaw.push_back(std::atan2(f.x(), f.z()));
    max_shift = std::max(max_shift, (v.pose.translation() - segment.front().pose.translation()).norm());
  }
  double excursion = 0, extreme = 0;
  for (double a : yaw) {
    if (std::abs(a) > excursion) {
      excursion = std::abs(a);
      extreme = a;
    }
  }
  const double delta = yaw.back();
  if (excursion < 0.02) {
    if (max_shift < 0.02) return instruction_id("static");
    const Vec3 local = r0t * (segment.back().pose.translation() - segment.front().pose.translation());
    if (std::abs(local.x()) >= std::abs(local.z())) return instruction_id(local.x() > 0 ? "truck-right" : "truck-left");
    return instruction_id(local.z() > 0 ? "dolly-in" : "dolly-out");
  }
  if (std::abs(delta) >= 0.8 * excursion) return instruction_id(delta > 0 ? "pan-right" : "pan-left");
  return instruction_id(extreme > 0 ? "pan-right-return" : "pan-left-return");
}

VideoSplit split_video_at(int length, int n_target, int m_preceding, int target_start) {
  if (n_target < 1 || m_preceding < 0) throw std::invalid_argument("split_video: need N >= 1 and M >= 0");
  if (length < n_target + m_preceding) throw std::invalid_argument("split_video: video shorter than N + M");
  if (target_start < m_preceding || target_start + n_target > length) {
    throw std::invalid_argument("split_video: target window out of range");
  }
  VideoSplit s;
  for (int i = 0; i < length; ++i) {
    if (i >= target_start && i < target_start + n_target) {
      s.target.push_back(i);
    } else if (i >= target_start - m_preceding && i < target_start) {
      s.preceding.push_back(i);
    } else {
      s.candidates.push_back(i);
    }
  }
  return s;
}

VideoSplit split_video(int length, int n_target, int m_preceding, std::mt19937_64& rng) {
  if (length < n_target + m_preceding) throw std::invalid_argument("split_video: video shorter than N + M");
  std::uniform_int_distribution<int> start(m_preceding, length - n_target);
  return split_video_at(length, n_target, m_preceding, start(rng));
}

TrainingSample assemble_sample(const SceneSpec& scene, const Trajectory& trajectory, const SampleConfig& cfg,
                               std::mt19937_64& rng) {
  validate_trajectory(trajectory);
  TrainingSample sample;
  const int len = static_cast<int>(trajectory.size());
  sample.split = split_video(len, cfg.n_target, cfg.m_preceding, rng);
  sample.cameras = trajectory;
  for (int f = 0; f < len; ++f) {
    sample.frames.push_back(render_gt(scene, trajectory[f].pose, trajectory[f].intrinsics,
                                      std::min(scene.duration, f * cfg.frame_dt)));
  }

  auto posed = [&](int f) {
    return PosedFrame{sample.frames[f].rgb, sample.frames[f].depth, sample.frames[f].dynamic_mask,
                      trajectory[f].pose, trajectory[f].intrinsics};
  };
  FusionOptions fusion;
  fusion.max_range = scene.max_range;
  SpatialMemory memory(cfg.cube_side);
  const auto& cands = sample.split.candidates;
  if (!cands.empty()) {
    if (cfg.fuse_all_candidates) {
      for (int f : cands) memory.fuse(posed(f), fusion);
    } else {
      sample.source_frame = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
      memory.fuse(posed(sample.source_frame), fusion);
    }
  } else {
    // No candidates (len == N + M): fall back to the earliest preceding frame.
    sample.source_frame = sample.split.preceding.empty() ? sample.split.target.front() : sample.split.preceding.front();
    memory.fuse(posed(sample.source_frame), fusion);
  }
  sample.scene_cloud = memory.snapshot();
  sample.projections = render_sequence(sample.scene_cloud, trajectory, cfg.splat_radius);

  std::vector<ViewCloud> targets, candidates;
  for (int f : sample.split.target) {
    targets.push_back({f, visible_subcloud(sample.scene_cloud, sample.projections[f], trajectory[f].pose),
                       trajectory[f].pose});
  }
  for (int f : cands) {
    candidates.push_back({f, visible_subcloud(sample.scene_cloud, sample.projections[f], trajectory[f].pose),
                          trajectory[f].pose});
  }
  sample.references = retrieve_references(targets, candidates, cfg.retrieval);

  std::vector<CameraView> tcams;
  for (int f : sample.split.target) tcams.push_back(trajectory[f]);
  sample.instruction = classify_motion(tcams);
  return sample;
}

void write_sample(const std::filesystem::path& dir, const TrainingSample& sample) {
  using nlohmann::json;
  namespace fs = std::filesystem;
  for (const char* sub : {"frames", "depth", "mask", "projections"}) fs::create_directories(dir / sub);
  char name[64];
  json poses = json::array();
  for (std::size_t f = 0; f < sample.frames.size(); ++f) {
    std::snprintf(name, sizeof(name), "%04zu", f);
    const std::string stem = name;
    write_png(dir / "frames" / (stem + ".png"), sample.frames[f].rgb);
    write_npy(dir / "depth" / (stem + ".npy"), sample.frames[f].depth);
    write_mask_png(dir / "mask" / (stem + ".png"), sample.frames[f].dynamic_mask);
    write_png(dir / "projections" / (stem + ".png"), sample.projections[f].rgb);
    write_mask_png(dir / "projections" / (stem + "_valid.png"), sample.projections[f].valid);
    const CameraView& c = sample.cameras[f];
    json rot = json::array();
    for (int i = 0; i < 9; ++i) rot.push_back(c.pose.rotation()(i / 3, i % 3));
    const Vec3& t = c.pose.translation();
    poses.push_back({{"rotation", rot},
                     {"translation", {t.x(), t.y(), t.z()}},
                     {"intrinsics",
                      {{"fx", c.intrinsics.fx}, {"fy", c.intrinsics.fy}, {"cx", c.intrinsics.cx},
                       {"cy", c.intrinsics.cy}, {"width", c.intrinsics.width}, {"height", c.intrinsics.height}}}});
  }
  write_spcl(dir / "scene.spcl", sample.scene_cloud);
  std::ofstream(dir / "poses.json") << poses.dump(1) << '\n';
  const json meta = {{"version", kDatasetVersion},
                     {"target", sample.split.target},
                     {"preceding", sample.split.preceding},
                     {"candidates", sample.split.candidates},
                     {"references", sample.references},
                     {"source_frame", sample.source_frame},
                     {"instruction", sample.instruction},
                     {"instruction_name", instruction_names()[sample.instruction]}};
  std::ofstream(dir / "sample.json") << meta.dump(1) << '\n';
}

}  // namespace scenemem
