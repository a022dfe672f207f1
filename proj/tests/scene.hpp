#pragma once

// Small synthetic street scene shared by the NDT test suites: a ground patch,
// four bounding walls and two pillars, sampled on a regular grid.

#include "ndtfuse/types.hpp"

namespace test_scene {

using ndtfuse::PointCloud;
using ndtfuse::Vec3;

inline void sample_wall_x(PointCloud& c, double x, double y0, double y1, double z1, double step) {
  for (double y = y0; y <= y1; y += step)
    for (double z = 0.0; z <= z1; z += step) c.points.emplace_back(x, y, z);
}

inline void sample_wall_y(PointCloud& c, double y, double x0, double x1, double z1, double step) {
  for (double x = x0; x <= x1; x += step)
    for (double z = 0.0; z <= z1; z += step) c.points.emplace_back(x, y, z);
}

inline PointCloud street_scene(double step = 0.25) {
  PointCloud c;
  c.frame = ndtfuse::Frame::map;
  // Generic (non-grid-aligned) coordinates so that no sample sits exactly on
  // a voxel boundary.
  const Vec3 shift(0.137, 0.211, 0.053);
  for (double x = -20.0; x <= 20.0; x += step)
    for (double y = -15.0; y <= 15.0; y += step) c.points.emplace_back(x, y, 0.0);
  sample_wall_x(c, -10.0, -15.0, 15.0, 4.0, step);
  sample_wall_x(c, 10.0, -15.0, 15.0, 4.0, step);
  sample_wall_y(c, -15.0, -20.0, 20.0, 4.0, step);
  sample_wall_y(c, 15.0, -20.0, 20.0, 4.0, step);
  // Two pillars break the symmetry.
  sample_wall_x(c, -4.0, -6.0, -4.0, 3.0, step);
  sample_wall_y(c, -4.0, -4.0, -2.0, 3.0, step);
  sample_wall_x(c, 5.0, 6.0, 8.0, 3.0, step);
  sample_wall_y(c, 8.0, 5.0, 7.0, 3.0, step);
  for (Vec3& p : c.points) p += shift;
  return c;
}

}  // namespace test_scene
