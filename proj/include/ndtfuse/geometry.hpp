#pragma once

#include "ndtfuse/types.hpp"

namespace ndtfuse {

constexpr double kPi = 3.141592653589793238462643383279502884;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

/// Wraps an angle in radians to (-pi, pi].
double wrap_angle(double rad);

/// Wraps an angle in degrees to (-180, 180].
double wrap_angle_deg(double deg);

/// compose(a, b): apply b first, then a. Stamp is taken from b.
Pose compose(const Pose& a, const Pose& b);

Pose inverse(const Pose& p);

/// Rotates then translates every point by p; the cloud moves into p's target
/// frame.
PointCloud transform_cloud(const Pose& p, const PointCloud& c, Frame target_frame);
PointCloud transform_cloud(const Pose& p, const PointCloud& c);

/// Pose from the 6-vector (tx, ty, tz, roll, pitch, yaw) with
/// R = Rz(yaw) Ry(pitch) Rx(roll).
Pose pose_from_xyzrpy(const Vec6& p, double stamp = 0.0);

/// Inverse of pose_from_xyzrpy (pitch in [-pi/2, pi/2]).
Vec6 xyzrpy_from_pose(const Pose& p);

double yaw_of(const Pose& p);

Mat3 skew(const Vec3& v);

/// Rotation vector (axis * angle) exponential.
Quat quat_exp(const Vec3& rotvec);

/// Rotation vector of q, angle in [0, pi].
Vec3 quat_log(const Quat& q);

/// Voxel-grid downsampling with keep-first policy: the first point seen in
/// each voxel survives, in input order.
PointCloud voxel_downsample(const PointCloud& c, double voxel_size);

}  // namespace ndtfuse
