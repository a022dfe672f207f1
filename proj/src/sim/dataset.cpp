#include "ndtfuse/sim/dataset.hpp"

#include <cmath>
#include <unordered_set>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geodesy.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::sim {

namespace {

constexpr std::uint64_t kStreamImu = 0x21;
constexpr std::uint64_t kStreamGnss = 0x22;
constexpr std::uint64_t kStreamWheel = 0x23;
constexpr std::uint64_t kStreamLidar = 0x24;
constexpr std::uint64_t kStreamCorrupt = 0x25;

std::uint64_t sample_stream(std::uint64_t base, std::uint64_t index) {
  return (base << 40) + index;
}

void check_path_in_bounds(const World& world, const Trajectory& traj) {
  const double ds = 0.5;
  for (double s = 0.0; s < traj.length(); s += ds) {
    const Pose p = traj.pose_at(s / traj.speed());
    if (!world.in_bounds({p.translation.x(), p.translation.y()})) {
      throw TrajectoryLeavesBounds("trajectory point outside world bounds at s=" +
                                   std::to_string(s));
    }
  }
}

}  // namespace

Dataset synthesize_dataset(const World& world, const TrajectorySpec& spec, const NoiseSpec& noise,
                           const SensorConfig& sensors) {
  const Trajectory traj(spec);
  check_path_in_bounds(world, traj);

  Dataset out;
  out.duration = spec.duration;
  out.reference.latitude = sensors.reference_latitude;
  out.reference.longitude = sensors.reference_longitude;
  out.reference.altitude = sensors.reference_altitude;
  out.reference.horizontal_accuracy = std::max(noise.gnss_sigma, 0.01);

  const auto count = [&](double hz) {
    return static_cast<std::size_t>(std::llround(spec.duration * hz));
  };

  const std::size_t n_imu = count(sensors.imu_hz);
  out.imu.reserve(n_imu);
  out.truth.reserve(n_imu);
  for (std::size_t k = 0; k < n_imu; ++k) {
    const double t = static_cast<double>(k) / sensors.imu_hz;
    ImuSample s = traj.imu_at(t);
    StreamRng rng(noise.seed, sample_stream(kStreamImu, k));
    s.angular_velocity += Vec3(0.0, 0.0, noise.gyro_bias) + rng.normal3(noise.gyro_sigma);
    s.linear_acceleration += Vec3(noise.accel_bias, 0.0, 0.0) + rng.normal3(noise.accel_sigma);
    out.imu.push_back(s);
    out.truth.push_back(traj.pose_at(t));
  }

  const std::size_t n_gnss = count(sensors.gnss_hz);
  out.gnss.reserve(n_gnss);
  for (std::size_t k = 0; k < n_gnss; ++k) {
    const double t = static_cast<double>(k) / sensors.gnss_hz;
    const Pose truth = traj.pose_at(t);
    StreamRng rng(noise.seed, sample_stream(kStreamGnss, k));
    Vec3 enu = truth.translation;
    enu.x() += noise.gnss_bias.x() + rng.normal(noise.gnss_sigma);
    enu.y() += noise.gnss_bias.y() + rng.normal(noise.gnss_sigma);
    enu.z() += rng.normal(noise.gnss_sigma);
    GnssSample s = enu_to_wgs84(enu, out.reference, t);
    const double heading_noise =
        noise.gnss_sigma > 0.0 ? rng.normal(kGnssHeadingSigmaDeg) : 0.0;
    s.heading = wrap_angle_deg(yaw_to_heading(yaw_of(truth)) + heading_noise);
    s.horizontal_accuracy = std::max(noise.gnss_sigma, 0.01);
    out.gnss.push_back(s);
  }

  const std::size_t n_wheel = count(sensors.wheel_hz);
  out.wheel.reserve(n_wheel);
  for (std::size_t k = 0; k < n_wheel; ++k) {
    const double t = static_cast<double>(k) / sensors.wheel_hz;
    StreamRng rng(noise.seed, sample_stream(kStreamWheel, k));
    out.wheel.push_back(WheelSample{t, traj.speed() + rng.normal(noise.wheel_sigma)});
  }

  const std::size_t n_scans = count(sensors.lidar_hz);
  out.scan_stamps.reserve(n_scans);
  for (std::size_t k = 0; k < n_scans; ++k) {
    out.scan_stamps.push_back(static_cast<double>(k) / sensors.lidar_hz);
  }
  out.scan_at = [world, traj, sensors, noise](std::size_t k) {
    const double t = static_cast<double>(k) / sensors.lidar_hz;
    StreamRng rng(noise.seed, sample_stream(kStreamLidar, k));
    return raycast_scan(world, traj.pose_at(t), sensors.lidar, noise.lidar_range_sigma, &rng);
  };

  return out;
}

PointCloud build_survey_map(const World& world, const TrajectorySpec& spec,
                            const SurveyParams& params) {
  const Trajectory traj(spec);
  PointCloud map;
  map.frame = Frame::map;

  std::unordered_set<std::int64_t> seen;
  const double inv = 1.0 / params.voxel;
  const auto key = [&](const Vec3& p) {
    const auto ix = static_cast<std::int64_t>(std::floor(p.x() * inv));
    const auto iy = static_cast<std::int64_t>(std::floor(p.y() * inv));
    const auto iz = static_cast<std::int64_t>(std::floor(p.z() * inv));
    return ((ix & 0x1FFFFF) << 42) | ((iy & 0x1FFFFF) << 21) | (iz & 0x1FFFFF);
  };

  for (double s = 0.0; s < traj.length(); s += params.stride) {
    const Pose pose = traj.pose_at(s / traj.speed());
    const PointCloud scan = raycast_scan(world, pose, params.lidar);
    const Mat3 r = pose.rotation_matrix();
    for (const Vec3& p_body : scan.points) {
      const Vec3 p = r * p_body + pose.translation;
      if (seen.insert(key(p)).second) map.points.push_back(p);
    }
  }
  return map;
}

PointCloud corrupt_map(const PointCloud& map, const std::vector<Box>& regions, CorruptionMode mode,
                       std::uint64_t seed) {
  PointCloud out;
  out.stamp = map.stamp;
  out.frame = map.frame;
  out.points.reserve(map.size());

  std::vector<std::size_t> in_region_count(regions.size(), 0);
  for (const Vec3& p : map.points) {
    bool inside = false;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      if (regions[i].contains(p)) {
        in_region_count[i] += 1;
        inside = true;
        break;
      }
    }
    if (!inside) out.points.push_back(p);
  }

  if (mode == CorruptionMode::noise) {
    for (std::size_t i = 0; i < regions.size(); ++i) {
      StreamRng rng(seed, sample_stream(kStreamCorrupt, i));
      const Box& b = regions[i];
      for (std::size_t k = 0; k < in_region_count[i]; ++k) {
        out.points.emplace_back(rng.uniform(b.min.x(), b.max.x()),
                                rng.uniform(b.min.y(), b.max.y()),
                                rng.uniform(b.min.z(), b.max.z()));
      }
    }
  }
  return out;
}

}  // namespace ndtfuse::sim
