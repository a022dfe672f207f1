#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <vector>

namespace ndtfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Quat = Eigen::Quaterniond;

/// Coordinate frames used throughout the toolkit. `lidar` is the sensor body
/// frame, `map` the fixed ENU-anchored world frame, `odom` a drifting frame
/// anchored at the first odometry pose.
enum class Frame { lidar, map, odom };

std::string to_string(Frame f);
Frame frame_from_string(const std::string& s);

/// Timestamped set of 3D points (meters, right-handed frame).
struct PointCloud {
  std::vector<Vec3> points;
  double stamp = 0.0;
  Frame frame = Frame::lidar;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// SE(3) rigid transform with timestamp. Applying a Pose maps points from its
/// source frame into its target frame: x' = R x + t.
struct Pose {
  Vec3 translation = Vec3::Zero();
  Quat rotation = Quat::Identity();
  double stamp = 0.0;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

  static Pose identity(double stamp = 0.0) { return Pose{Vec3::Zero(), Quat::Identity(), stamp}; }
};

/// Raw inertial sample in the body frame. linear_acceleration is specific
/// force and therefore includes the gravity reaction (a resting, level sensor
/// reads +9.81 on z).
struct ImuSample {
  double stamp = 0.0;
  Vec3 angular_velocity = Vec3::Zero();     // rad/s
  Vec3 linear_acceleration = Vec3::Zero();  // m/s^2
};

/// WGS84 fix. heading is degrees clockwise from true north when present.
struct GnssSample {
  double stamp = 0.0;
  double latitude = 0.0;   // deg
  double longitude = 0.0;  // deg
  double altitude = 0.0;   // m
  std::optional<double> heading = std::nullopt;  // deg, clockwise from north
  double horizontal_accuracy = 1.0;              // m, 1 sigma
};

struct WheelSample {
  double stamp = 0.0;
  double speed = 0.0;  // m/s, forward positive
};

}  // namespace ndtfuse
