#pragma once

#include <unordered_set>

#include "ndtfuse/types.hpp"

namespace ndtfuse::odom {

struct OdometryParams {
  int ring_count = 16;
  int neighbor_half_width = 5;   // smoothness window, points each side
  double edge_threshold = 0.01;  // dimensionless smoothness
  double plane_threshold = 2e-3;
  int edges_per_quadrant = 4;
  int planes_per_quadrant = 8;
  int min_ring_points = 11;
  double range_jump = 1.0;  // m; occlusion boundaries are barred from edges
  int max_iterations = 20;
  double step_tolerance = 1e-4;
  int min_correspondences = 10;
  double edge_gate = 1.0;  // m, correspondence distance gates
  double plane_gate = 1.0;
  double edge_weight = 1.0;  // relative weight of edge correspondences
  double map_voxel = 0.2;  // m, accumulated-map density cap
};

/// High-curvature (edge) and low-curvature (plane) subsets of one sweep.
struct FeatureSet {
  PointCloud edges;
  PointCloud planes;
  double stamp = 0.0;
};

/// Ring-based smoothness classification. Rings are recovered from the
/// ring-major point ordering via azimuth wrap-around; rings with fewer than
/// min_ring_points returns are skipped, and TooFewPoints is thrown when no
/// usable ring remains.
FeatureSet extract_features(const PointCloud& scan, int ring_count,
                            const OdometryParams& params = {});

struct OdometryState {
  Pose pose;  // body -> odom
  FeatureSet previous_features;
  PointCloud accumulated_map;  // odom frame, density capped at map_voxel
  Pose last_increment;         // constant-velocity fallback
  bool initialized = false;
  bool last_step_fallback = false;
  std::unordered_set<std::int64_t> map_voxels;
};

/// Starts the chain: the first scan defines the odometry origin (anchor).
OdometryState init_odometry(const PointCloud& first_scan, const Pose& anchor,
                            const OdometryParams& params = {});

/// Aligns the scan's features to the previous sweep (point-to-line for edges,
/// point-to-plane for planes, Gauss-Newton) and composes the increment onto
/// state.pose. On alignment failure the pose is propagated by the constant
/// velocity model and last_step_fallback is set.
OdometryState& step(OdometryState& state, const PointCloud& scan,
                    const OdometryParams& params = {});

}  // namespace ndtfuse::odom
