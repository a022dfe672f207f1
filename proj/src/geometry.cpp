#include "ndtfuse/geometry.hpp"

#include <cmath>
#include <unordered_set>

#include "ndtfuse/errors.hpp"

namespace ndtfuse {

std::string to_string(Frame f) {
  switch (f) {
    case Frame::lidar: return "lidar";
    case Frame::map: return "map";
    case Frame::odom: return "odom";
  }
  return "map";
}

Frame frame_from_string(const std::string& s) {
  if (s == "lidar") return Frame::lidar;
  if (s == "map") return Frame::map;
  if (s == "odom") return Frame::odom;
  throw Error("unknown frame: " + s);
}

double wrap_angle(double rad) {
  double a = std::fmod(rad, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

double wrap_angle_deg(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.translation = a.rotation * b.translation + a.translation;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.stamp = b.stamp;
  return out;
}

Pose inverse(const Pose& p) {
  Pose out;
  out.rotation = p.rotation.conjugate();
  out.translation = -(out.rotation * p.translation);
  out.stamp = p.stamp;
  return out;
}

PointCloud transform_cloud(const Pose& p, const PointCloud& c, Frame target_frame) {
  PointCloud out;
  out.points.reserve(c.points.size());
  const Mat3 r = p.rotation_matrix();
  for (const Vec3& x : c.points) out.points.push_back(r * x + p.translation);
  out.stamp = c.stamp;
  out.frame = target_frame;
  return out;
}

PointCloud transform_cloud(const Pose& p, const PointCloud& c) {
  return transform_cloud(p, c, Frame::map);
}

Pose pose_from_xyzrpy(const Vec6& p, double stamp) {
  Pose out;
  out.translation = p.head<3>();
  out.rotation = Eigen::AngleAxisd(p[5], Vec3::UnitZ()) *
                 Eigen::AngleAxisd(p[4], Vec3::UnitY()) *
                 Eigen::AngleAxisd(p[3], Vec3::UnitX());
  out.rotation.normalize();
  out.stamp = stamp;
  return out;
}

Vec6 xyzrpy_from_pose(const Pose& p) {
  Vec6 out;
  out.head<3>() = p.translation;
  const Mat3 r = p.rotation_matrix();
  // ZYX convention; pitch degenerates at +-90 deg, callers stay clear of it.
  out[4] = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  out[3] = std::atan2(r(2, 1), r(2, 2));
  out[5] = std::atan2(r(1, 0), r(0, 0));
  return out;
}

double yaw_of(const Pose& p) {
  const Mat3 r = p.rotation_matrix();
  return std::atan2(r(1, 0), r(0, 0));
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Quat quat_exp(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * rotvec.x(), 0.5 * rotvec.y(), 0.5 * rotvec.z());
    q.normalize();
    return q;
  }
  return Quat(Eigen::AngleAxisd(angle, rotvec / angle));
}

Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const double sin_half = q.vec().norm();
  if (sin_half < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(sin_half, q.w());
  return q.vec() * (angle / sin_half);
}

namespace {

inline std::int64_t voxel_key(const Vec3& p, double inv_voxel) {
  const auto ix = static_cast<std::int64_t>(std::floor(p.x() * inv_voxel));
  const auto iy = static_cast<std::int64_t>(std::floor(p.y() * inv_voxel));
  const auto iz = static_cast<std::int64_t>(std::floor(p.z() * inv_voxel));
  // 21 bits per axis, biased; covers +-1e6 m at any practical voxel size.
  return ((ix & 0x1FFFFF) << 42) | ((iy & 0x1FFFFF) << 21) | (iz & 0x1FFFFF);
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& c, double voxel_size) {
  if (voxel_size <= 0.0) throw Error("voxel_size must be > 0");
  PointCloud out;
  out.stamp = c.stamp;
  out.frame = c.frame;
  std::unordered_set<std::int64_t> seen;
  seen.reserve(c.points.size());
  const double inv = 1.0 / voxel_size;
  for (const Vec3& p : c.points) {
    if (seen.insert(voxel_key(p, inv)).second) out.points.push_back(p);
  }
  return out;
}

}  // namespace ndtfuse
