#include "ndtfuse/sim/lidar.hpp"

#include <cmath>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::sim {

namespace {

// Slab intersection; returns the entry distance, or a negative value on miss
// or when the origin is inside the box (rays pass through from inside).
double ray_box(const Vec3& o, const Vec3& d, const Box& b, double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int axis = 0; axis < 3; ++axis) {
    const double dv = d[axis];
    if (std::abs(dv) < 1e-12) {
      if (o[axis] < b.min[axis] || o[axis] > b.max[axis]) return -1.0;
      continue;
    }
    double tn = (b.min[axis] - o[axis]) / dv;
    double tf = (b.max[axis] - o[axis]) / dv;
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return -1.0;
  }
  return t0 > 1e-6 ? t0 : -1.0;
}

double point_box_distance(const Vec3& p, const Box& b) {
  Vec3 d = Vec3::Zero();
  for (int axis = 0; axis < 3; ++axis) {
    if (p[axis] < b.min[axis]) d[axis] = b.min[axis] - p[axis];
    else if (p[axis] > b.max[axis]) d[axis] = p[axis] - b.max[axis];
  }
  return d.norm();
}

}  // namespace

PointCloud raycast_scan(const World& world, const Pose& pose, const LidarConfig& cfg,
                        double range_sigma, StreamRng* rng) {
  const Vec3 origin = pose.translation;
  if (!world.in_bounds({origin.x(), origin.y()})) {
    throw Error("raycast_scan: sensor pose outside world bounds");
  }

  // Broad phase: only buildings reachable within max_range.
  std::vector<const Box*> nearby;
  nearby.reserve(world.buildings.size());
  for (const Box& b : world.buildings) {
    if (point_box_distance(origin, b) <= cfg.max_range) nearby.push_back(&b);
  }

  std::vector<double> az_cos(cfg.rays_per_ring), az_sin(cfg.rays_per_ring);
  for (int j = 0; j < cfg.rays_per_ring; ++j) {
    const double az = -kPi + 2.0 * kPi * j / cfg.rays_per_ring;
    az_cos[j] = std::cos(az);
    az_sin[j] = std::sin(az);
  }

  const Mat3 r = pose.rotation_matrix();
  PointCloud cloud;
  cloud.frame = Frame::lidar;
  cloud.stamp = pose.stamp;
  cloud.points.reserve(static_cast<std::size_t>(cfg.rings) * cfg.rays_per_ring / 2);

  for (int i = 0; i < cfg.rings; ++i) {
    const double elev =
        deg2rad(cfg.elevation_min_deg +
                (cfg.elevation_max_deg - cfg.elevation_min_deg) * i / std::max(1, cfg.rings - 1));
    const double ce = std::cos(elev), se = std::sin(elev);
    for (int j = 0; j < cfg.rays_per_ring; ++j) {
      const Vec3 dir_body(ce * az_cos[j], ce * az_sin[j], se);
      const Vec3 dir = r * dir_body;

      double best = cfg.max_range + 1.0;
      if (dir.z() < -1e-12) {
        const double tg = (world.ground_z - origin.z()) / dir.z();
        if (tg > 1e-6 && tg < best) best = tg;
      }
      for (const Box* b : nearby) {
        const double t = ray_box(origin, dir, *b, best);
        if (t > 0.0 && t < best) best = t;
      }
      if (best > cfg.max_range) continue;

      const double range = range_sigma > 0.0 && rng != nullptr ? best + rng->normal(range_sigma) : best;
      cloud.points.push_back(dir_body * range);
    }
  }
  return cloud;
}

}  // namespace ndtfuse::sim
