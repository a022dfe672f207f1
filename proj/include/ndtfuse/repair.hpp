#pragma once

#include <optional>

#include "ndtfuse/fusion/methods.hpp"
#include "ndtfuse/map_status.hpp"
#include "ndtfuse/ndt/registration.hpp"
#include "ndtfuse/odometry.hpp"
#include "ndtfuse/sim/dataset.hpp"

namespace ndtfuse::repair {

struct RepairParams {
  double fitness_suspect = 0.4;      // single-frame trigger
  double discrepancy_suspect = 1.5;  // m vs dead reckoning, single frame
  int suspect_frames = 10;           // consecutive scans before CORRUPTED
  double fitness_recover = 0.6;
  double discrepancy_recover = 0.5;  // m
  int recover_frames = 5;            // consecutive scans before recovery
  double map_voxel = 0.2;            // m, patch density cap
};

/// One step of the map-health state machine. `dead_reckoning_pose` is the
/// GNSS+IMU reference the NDT result is checked against. Transitions follow
/// VALID -> SUSPECT -> {VALID, CORRUPTED}; CORRUPTED -> REBUILDING ->
/// RESTORED -> VALID, never skipping states; CORRUPTED and RESTORED are
/// advanced by the repair pipeline, not by assess.
MapStatus assess(const ndt::RegistrationResult& reg, const Pose& dead_reckoning_pose,
                 const MapStatus& status, const RepairParams& params = {});

/// Map-frame reconstruction of a corrupted stretch: lidar-odometry points
/// re-expressed through the dead-reckoning anchor recorded when the map went
/// CORRUPTED, plus the re-entry mismatch.
struct RepairPatch {
  PointCloud points;  // map frame, density capped at map_voxel
  Pose anchor_pose;
  double seam_error = 0.0;  // m, translational gap at re-entry
};

/// Replace-region merge: original points inside the patch's bounding box are
/// dropped, patch points are inserted through a 0.2 m voxel filter seeded
/// with the retained originals; out-of-region points stay untouched.
PointCloud merge(const PointCloud& map, const RepairPatch& patch,
                 const RepairParams& params = {});

struct RepairOutcome {
  PointCloud patched_map;
  std::optional<RepairPatch> patch;  // absent when the map never corrupted
  std::vector<fusion::LocalizationOutput> outputs;  // per scan, with map_status
  std::vector<MapState> status_trace;               // per scan
  bool odometry_lost = false;
};

/// Full supervision pipeline over one dataset: NDT matching against the map,
/// a GNSS+IMU reference filter for discrepancy monitoring, lidar-odometry
/// rebuild of corrupted stretches, and a replace-region merge once matching
/// recovers. The patched grid takes over for the rest of the run.
RepairOutcome run_repair(const sim::Dataset& dataset, const PointCloud& map_cloud,
                         const fusion::MethodConfig& cfg, const RepairParams& params = {});

}  // namespace ndtfuse::repair
