// SPDX-License-Identifier: Apache-2.0

#include "scenemem/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/SVD>

namespace scenemem {

namespace {

double orthonormality(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace

Pose::Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw std::invalid_argument("Pose: non-finite rotation or translation");
  }
  if (orthonormality(rotation) > 1e-6 || std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw std::invalid_argument("Pose: rotation is not orthonormal with det +1");
  }
}

Pose Pose::unchecked(const Mat3& rotation, const Vec3& translation) {
  Pose p;
  p.rotation_ = rotation;
  p.translation_ = translation;
  return p;
}

Pose Pose::from_matrix(const Mat4& m) {
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  // Camera +Y points along -up, so right = forward x up.
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) {
    throw std::invalid_argument("Pose::look_at: view direction parallel to up");
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(r, eye);
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Pose Pose::orthonormalized() const {
  Eigen::JacobiSVD<Mat3> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1;
    r = u * svd.matrixV().transpose();
  }
  return unchecked(r, translation_);
}

double Pose::orthonormality_error() const { return orthonormality(rotation_); }

bool Pose::is_approx(const Pose& other, double tol) const {
  return (rotation_ - other.rotation_).cwiseAbs().maxCoeff() <= tol &&
         (translation_ - other.translation_).cwiseAbs().maxCoeff() <= tol;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose::unchecked(a.rotation() * b.rotation(),
                         a.rotation() * b.translation() + a.translation());
}

Pose invert(const Pose& p) {
  const Mat3 rt = p.rotation().transpose();
  return Pose::unchecked(rt, -(rt * p.translation()));
}

Mat3 rotation_x(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitX()).toRotationMatrix();
}

Mat3 rotation_y(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitY()).toRotationMatrix();
}

Mat3 rotation_z(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
}

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) {
    throw std::invalid_argument("Intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("Intrinsics: width and height must be positive");
  }
  if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height)) {
    throw std::invalid_argument("Intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::from_fov(int width, int height, double horizontal_fov_deg) {
  constexpr double kPi = 3.14159265358979323846;
  const double f = 0.5 * width / std::tan(0.5 * horizontal_fov_deg * kPi / 180.0);
  Intrinsics k{f, f, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
  k.validate();
  return k;
}

std::optional<Projection> project_camera(const Vec3& cam_point, const Intrinsics& intr,
                                         double epsilon_z) {
  const double z = cam_point.z();
  if (!(z > epsilon_z)) {
    return std::nullopt;
  }
  return Projection{Vec2(intr.fx * cam_point.x() / z + intr.cx, intr.fy * cam_point.y() / z + intr.cy),
                    z};
}

std::optional<Projection> project(const Vec3& world, const Pose& cam_pose, const Intrinsics& intr,
                                  double epsilon_z) {
  return project_camera(cam_pose.apply_inverse(world), intr, epsilon_z);
}

Vec3 back_project(const Vec2& pixel, double depth, const Pose& cam_pose, const Intrinsics& intr) {
  if (!(depth > 0)) {
    throw std::invalid_argument("back_project: depth must be positive, got " + std::to_string(depth));
  }
  const Vec3 cam((pixel.x() - intr.cx) / intr.fx * depth, (pixel.y() - intr.cy) / intr.fy * depth, depth);
  return cam_pose.apply(cam);
}

void PointCloud::reserve(std::size_t n) {
  positions.reserve(n);
  colors.reserve(n);
}

void PointCloud::push_back(const Vec3& p, const Color& c) {
  positions.push_back(p);
  colors.push_back(c);
}

void PointCloud::push_back(const Vec3& p, const Color& c, int32_t source_id) {
  if (source_ids.size() != positions.size()) {
    throw std::logic_error("PointCloud::push_back: mixing points with and without source ids");
  }
  positions.push_back(p);
  colors.push_back(c);
  source_ids.push_back(source_id);
}

void PointCloud::validate() const {
  if (positions.size() != colors.size()) {
    throw std::invalid_argument("PointCloud: positions and colors differ in length");
  }
  if (!source_ids.empty() && source_ids.size() != positions.size()) {
    throw std::invalid_argument("PointCloud: source ids differ in length");
  }
  for (const Color& c : colors) {
    if (!(c.minCoeff() >= 0.0f && c.maxCoeff() <= 1.0f)) {
      throw std::invalid_argument("PointCloud: color channel outside [0,1]");
    }
  }
}

PointCloud transform_cloud(const PointCloud& c, const Pose& p) {
  PointCloud out;
  out.positions.reserve(c.size());
  for (const Vec3& x : c.positions) {
    out.positions.push_back(p.apply(x));
  }
  out.colors = c.colors;
  out.source_ids = c.source_ids;
  return out;
}

}  // namespace scenemem
