#pragma once

#include <cstdint>
#include <vector>

#include "ndtfuse/types.hpp"

namespace ndtfuse::sim {

/// Axis-aligned box, the building primitive (also reused as a map-corruption
/// region).
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y() &&
           p.z() >= min.z() && p.z() <= max.z();
  }
};

/// Synthetic urban block world: a flat ground plane at z = 0, axis-aligned
/// buildings, and a rectangular ring road the default trajectory follows.
struct World {
  std::vector<Box> buildings;
  Eigen::Vector2d bounds_min = Eigen::Vector2d::Zero();
  Eigen::Vector2d bounds_max = Eigen::Vector2d(320.0, 320.0);
  double ground_z = 0.0;
  // Ring-road centerline corners (CCW), produced by the generator.
  std::vector<Eigen::Vector2d> ring_corners;

  bool in_bounds(const Eigen::Vector2d& p) const {
    return p.x() >= bounds_min.x() && p.x() <= bounds_max.x() && p.y() >= bounds_min.y() &&
           p.y() <= bounds_max.y();
  }
};

struct WorldParams {
  double ring_margin = 40.0;       // centerline distance from the bounds
  double street_half_width = 7.0;  // building setback from the centerline
  double corner_clearance = 14.0;  // kept free of buildings around ring corners
  // A stretch of the south edge is lined with single long buildings on both
  // sides, forming a feature-poor street canyon.
  double canyon_length = 150.0;
  int filler_blocks = 3;  // interior buildings
};

/// Deterministic block world for a given (seed, bounds). Streets form a
/// loopable rectangle with buildings on both sides and open corners.
World generate_world(std::uint64_t seed, const Eigen::Vector2d& bounds,
                     const WorldParams& params = {});

/// Closed-loop waypoints along the world's ring road (first == last).
struct TrajectorySpec {
  std::vector<Eigen::Vector2d> waypoints;
  double speed = 0.0;      // m/s cruise; 0 = one full loop per `duration`
  double duration = 800.0; // s
  double turn_radius = 4.0;
  double sensor_height = 1.6;
};

TrajectorySpec default_loop_trajectory(const World& world, double duration = 800.0);

/// Piecewise straight/arc path sampled from a TrajectorySpec. Headings, IMU
/// rates and accelerations are exact closed forms of the arc-line geometry.
class Trajectory {
 public:
  explicit Trajectory(const TrajectorySpec& spec);

  double length() const { return length_; }
  double speed() const { return speed_; }
  double duration() const { return spec_.duration; }

  Pose pose_at(double t) const;
  Vec3 velocity_at(double t) const;
  /// Noise-free body-frame IMU sample (specific force includes gravity).
  ImuSample imu_at(double t) const;

 private:
  struct Segment {
    bool arc = false;
    double s0 = 0.0;      // cumulative arc length at segment start
    double length = 0.0;
    // straight: start point + unit direction; arc: center, radius, start
    // angle (from center to entry point) and signed direction.
    Eigen::Vector2d a = Eigen::Vector2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    double radius = 0.0;
    double phi0 = 0.0;
    double sign = 1.0;
    double heading = 0.0;  // straight segments only
  };

  const Segment& segment_at(double s, double& local) const;

  TrajectorySpec spec_;
  std::vector<Segment> segments_;
  double length_ = 0.0;
  double speed_ = 1.0;
};

}  // namespace ndtfuse::sim
