// SPDX-License-Identifier: Apache-2.0
//
// Camera model, rigid transforms and the point-cloud value type.
//
// Conventions used everywhere in the library:
//   * camera frame: +Z forward, +X right, +Y down
//   * pixel origin at the top-left, integer coordinates at pixel centres
//   * a Pose maps camera coordinates into world coordinates (camera-to-world)

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scenemem {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Color = Eigen::Vector3f;

/// Points with camera depth at or below this are behind the camera.
inline constexpr double kEpsilonZ = 1e-6;

/// Rigid transform x -> R x + t with R in SO(3).
class Pose {
 public:
  Pose();

  /// Throws std::invalid_argument unless R is orthonormal with det +1 (1e-6).
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }
  static Pose from_matrix(const Mat4& m);
  /// Builds without validation. Used by composition chains that re-orthonormalize later.
  static Pose unchecked(const Mat3& rotation, const Vec3& translation);

  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3(0, -1, 0));

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  Vec3 apply_inverse(const Vec3& x) const { return rotation_.transpose() * (x - translation_); }

  /// Projects the rotation back onto SO(3) (SVD polar factor).
  Pose orthonormalized() const;

  /// ||R^T R - I||_inf
  double orthonormality_error() const;

  bool is_approx(const Pose& other, double tol = 1e-6) const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Maps x -> a(b(x)).
Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);

Mat3 rotation_x(double radians);
Mat3 rotation_y(double radians);
Mat3 rotation_z(double radians);

struct Intrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument on non-positive focal lengths, sizes, or an
  /// out-of-image principal point.
  void validate() const;

  /// Square pixels, principal point at the image centre.
  static Intrinsics from_fov(int width, int height, double horizontal_fov_deg);

  bool operator==(const Intrinsics&) const = default;
};

struct Projection {
  Vec2 pixel;
  double depth = 0;
};

/// World point into the image of a camera at `cam_pose`.
/// Returns nullopt when the point is behind the camera (Zc <= epsilon_z).
std::optional<Projection> project(const Vec3& world, const Pose& cam_pose, const Intrinsics& intr,
                                  double epsilon_z = kEpsilonZ);

/// Same as project() for a point already expressed in camera coordinates.
std::optional<Projection> project_camera(const Vec3& cam_point, const Intrinsics& intr,
                                         double epsilon_z = kEpsilonZ);

/// Inverse of project(). Throws std::invalid_argument for depth <= 0.
Vec3 back_project(const Vec2& pixel, double depth, const Pose& cam_pose, const Intrinsics& intr);

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Color> colors;
  /// Empty, or one source-frame id per point.
  std::vector<int32_t> source_ids;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void reserve(std::size_t n);
  void push_back(const Vec3& p, const Color& c);
  void push_back(const Vec3& p, const Color& c, int32_t source_id);

  /// Throws std::invalid_argument on length mismatch or colors outside [0,1].
  void validate() const;
};

/// Every position mapped through `p`; colors and ids unchanged.
PointCloud transform_cloud(const PointCloud& c, const Pose& p);

}  // namespace scenemem
