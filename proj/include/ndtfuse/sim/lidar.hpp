#pragma once

#include "ndtfuse/sim/rng.hpp"
#include "ndtfuse/sim/world.hpp"
#include "ndtfuse/types.hpp"

namespace ndtfuse::sim {

struct LidarConfig {
  int rings = 16;
  int rays_per_ring = 900;
  double max_range = 100.0;  // m
  double elevation_min_deg = -15.0;
  double elevation_max_deg = 15.0;
};

/// First-hit raycast against the world's buildings and ground plane. Points
/// come back in the sensor (lidar) frame, ring-major from the lowest ring,
/// with misses omitted. Gaussian range noise is added when rng is given.
PointCloud raycast_scan(const World& world, const Pose& pose, const LidarConfig& cfg = {},
                        double range_sigma = 0.0, StreamRng* rng = nullptr);

}  // namespace ndtfuse::sim
