#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ndtfuse/sim/lidar.hpp"
#include "ndtfuse/sim/world.hpp"
#include "ndtfuse/types.hpp"

namespace ndtfuse::sim {

/// Injectable sensor errors. Biases are fixed offsets: the gyro bias acts on
/// the yaw axis and the accelerometer bias on the body-forward axis, the two
/// axes that dominate dead-reckoning drift.
struct NoiseSpec {
  double gnss_sigma = 0.0;  // m, per ENU axis
  Eigen::Vector2d gnss_bias = Eigen::Vector2d::Zero();  // m, east/north
  double gyro_sigma = 0.0;   // rad/s
  double gyro_bias = 0.0;    // rad/s
  double accel_sigma = 0.0;  // m/s^2
  double accel_bias = 0.0;   // m/s^2
  double lidar_range_sigma = 0.0;  // m
  double wheel_sigma = 0.0;        // m/s
  std::uint64_t seed = 0;
};

// GNSS heading error when gnss_sigma > 0 (receiver characteristic, 1 sigma).
constexpr double kGnssHeadingSigmaDeg = 2.0;

struct SensorConfig {
  double lidar_hz = 10.0;
  double imu_hz = 100.0;
  double gnss_hz = 5.0;
  double wheel_hz = 100.0;
  LidarConfig lidar;
  // Projection anchor for generated WGS84 fixes.
  double reference_latitude = 31.2304;
  double reference_longitude = 121.4737;
  double reference_altitude = 4.0;
};

struct Dataset {
  // Scans are produced on demand (they dominate memory at full scale); the
  // generator is deterministic per index thanks to counter-based noise
  // streams. scan_at(k) returns the scan stamped scan_stamps[k].
  std::vector<double> scan_stamps;
  std::function<PointCloud(std::size_t)> scan_at;
  std::vector<ImuSample> imu;
  std::vector<GnssSample> gnss;
  std::vector<WheelSample> wheel;
  std::vector<Pose> truth;  // map frame, at IMU rate
  GnssSample reference;     // fixed projection reference
  double duration = 0.0;
};

/// Deterministic sensor streams plus ground truth for (world, traj, noise).
/// Throws TrajectoryLeavesBounds when the path exits the world rectangle.
Dataset synthesize_dataset(const World& world, const TrajectorySpec& traj, const NoiseSpec& noise,
                           const SensorConfig& sensors = {});

struct SurveyParams {
  double stride = 2.0;   // m between survey scans along the loop
  double voxel = 0.1;    // m coverage spacing cap
  LidarConfig lidar{64, 720, 60.0, -30.0, 30.0};
};

/// Noise-free dense map cloud: a survey pass along the trajectory, raycast
/// with a tall sensor stack and merged through a keep-first voxel filter.
PointCloud build_survey_map(const World& world, const TrajectorySpec& traj,
                            const SurveyParams& params = {});

enum class CorruptionMode { erase, noise };

/// Removes map points inside the regions (erase) or replaces them with the
/// same count of uniform random points spanning each region (noise).
PointCloud corrupt_map(const PointCloud& map, const std::vector<Box>& regions, CorruptionMode mode,
                       std::uint64_t seed = 0);

}  // namespace ndtfuse::sim
