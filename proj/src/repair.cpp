#include "ndtfuse/repair.hpp"

#include <cmath>
#include <unordered_set>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"
#include "ndtfuse/ndt/grid.hpp"

namespace ndtfuse::repair {

namespace {

using fusion::FilterState;
using fusion::LocalizationOutput;
using fusion::MethodConfig;
using ndt::NdtGrid;

inline std::int64_t voxel_key(const Vec3& p, double inv) {
  const auto ix = static_cast<std::int64_t>(std::floor(p.x() * inv));
  const auto iy = static_cast<std::int64_t>(std::floor(p.y() * inv));
  const auto iz = static_cast<std::int64_t>(std::floor(p.z() * inv));
  return ((ix & 0x1FFFFF) << 42) | ((iy & 0x1FFFFF) << 21) | (iz & 0x1FFFFF);
}

bool suspect_condition(const ndt::RegistrationResult& reg, const Pose& dr,
                       const RepairParams& p) {
  const double disc = (reg.pose.translation - dr.translation).norm();
  return reg.fitness < p.fitness_suspect || disc > p.discrepancy_suspect;
}

bool recover_condition(const ndt::RegistrationResult& reg, const Pose& dr,
                       const RepairParams& p) {
  const double disc = (reg.pose.translation - dr.translation).norm();
  return reg.fitness >= p.fitness_recover && disc <= p.discrepancy_recover;
}

}  // namespace

MapStatus assess(const ndt::RegistrationResult& reg, const Pose& dead_reckoning_pose,
                 const MapStatus& status, const RepairParams& params) {
  MapStatus out = status;
  const double stamp = reg.pose.stamp;
  const bool suspect = suspect_condition(reg, dead_reckoning_pose, params);
  const bool good = recover_condition(reg, dead_reckoning_pose, params);

  switch (status.state) {
    case MapState::VALID:
      if (suspect) {
        out.state = MapState::SUSPECT;
        out.entered_at = stamp;
        out.suspect_streak = 1;
      }
      break;
    case MapState::SUSPECT:
      if (suspect) {
        out.suspect_streak += 1;
        if (out.suspect_streak >= params.suspect_frames) {
          out.state = MapState::CORRUPTED;
          out.entered_at = stamp;
        }
      } else {
        out.state = MapState::VALID;
        out.entered_at = stamp;
        out.suspect_streak = 0;
      }
      break;
    case MapState::CORRUPTED:
      // Left by the pipeline when the rebuild starts.
      break;
    case MapState::REBUILDING:
      if (good) {
        out.good_streak += 1;
        if (out.good_streak >= params.recover_frames) {
          out.state = MapState::RESTORED;
          out.entered_at = stamp;
        }
      } else {
        out.good_streak = 0;
      }
      break;
    case MapState::RESTORED:
      // Left by the pipeline once the patch is merged.
      break;
  }
  return out;
}

PointCloud merge(const PointCloud& map, const RepairPatch& patch, const RepairParams& params) {
  if (patch.points.empty()) return map;

  Vec3 lo = patch.points.points.front(), hi = lo;
  for (const Vec3& p : patch.points.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }

  PointCloud out;
  out.frame = map.frame;
  out.stamp = map.stamp;
  out.points.reserve(map.size() + patch.points.size());
  const double inv = 1.0 / params.map_voxel;
  std::unordered_set<std::int64_t> occupied;
  occupied.reserve(map.size());
  const auto in_region = [&](const Vec3& p) {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  };
  for (const Vec3& p : map.points) {
    if (in_region(p)) continue;  // replaced by the patch
    out.points.push_back(p);
    occupied.insert(voxel_key(p, inv));
  }
  for (const Vec3& p : patch.points.points) {
    if (occupied.insert(voxel_key(p, inv)).second) out.points.push_back(p);
  }
  return out;
}

RepairOutcome run_repair(const sim::Dataset& data, const PointCloud& map_cloud,
                         const MethodConfig& cfg, const RepairParams& params) {
  if (data.gnss.empty()) throw StreamEmpty("run_repair: no GNSS samples");
  if (data.imu.empty()) throw StreamEmpty("run_repair: no IMU samples");
  if (data.scan_stamps.empty()) throw StreamEmpty("run_repair: no scans");
  if (map_cloud.empty()) throw EmptyMap("run_repair: empty map");

  RepairOutcome outcome;
  PointCloud current_map = map_cloud;
  NdtGrid grid = ndt::build_grid(current_map, 1.0);

  // GNSS+IMU dead-reckoning reference (never sees NDT results).
  FilterState ref;
  bool ref_init = false;
  std::size_t imu_i = 0, gnss_i = 0;

  MapStatus status;
  Pose last_ndt_pose;
  bool have_ndt_pose = false;

  // Rebuild bookkeeping.
  std::optional<odom::OdometryState> odometry;
  Pose anchor;  // dead-reckoning pose at CORRUPTED entry
  std::optional<Pose> first_good_reg;
  std::optional<Pose> first_good_odom;

  const auto advance_reference = [&](double until) {
    while (true) {
      const double next_gnss =
          gnss_i < data.gnss.size() ? data.gnss[gnss_i].stamp : std::numeric_limits<double>::max();
      const double next_imu =
          imu_i < data.imu.size() ? data.imu[imu_i].stamp : std::numeric_limits<double>::max();
      const double next = std::min(next_gnss, next_imu);
      if (next > until) break;
      if (next_imu <= next_gnss) {
        const ImuSample& s = data.imu[imu_i++];
        if (ref_init && s.stamp > ref.stamp + 1e-9) {
          ref = ukf_predict(ref, s, s.stamp - ref.stamp, cfg.ukf);
        }
      } else {
        const GnssSample& s = data.gnss[gnss_i++];
        if (!ref_init) {
          ref = fusion::init_filter_from_fix(s, data, cfg);
          ref_init = true;
        } else {
          const double acc = std::max(s.horizontal_accuracy, 0.01);
          const Vec3 z = fusion::gnss_pose(s, data.reference).translation;
          ref = ukf_update_position(ref, z, acc * acc * Mat3::Identity(), cfg.ukf);
        }
      }
    }
  };

  for (std::size_t k = 0; k < data.scan_stamps.size(); ++k) {
    const double stamp = data.scan_stamps[k];
    advance_reference(stamp);
    if (!ref_init) continue;

    const PointCloud scan = data.scan_at(k);
    Pose dr = ref.pose();
    dr.stamp = stamp;

    Pose init = (have_ndt_pose && status.state != MapState::REBUILDING &&
                 status.state != MapState::CORRUPTED)
                    ? last_ndt_pose
                    : dr;
    init.stamp = stamp;

    ndt::RegistrationResult reg;
    bool reg_ok = true;
    try {
      reg = ndt::register_scan(grid, scan, init, cfg.registration);
    } catch (const Error&) {
      reg_ok = false;
      reg.pose = dr;
      reg.fitness = 0.0;
      reg.converged = false;
    }
    reg.pose.stamp = stamp;

    const MapStatus before = status;
    status = assess(reg, dr, status, params);

    // Pipeline-driven transitions.
    if (status.state == MapState::CORRUPTED && before.state != MapState::CORRUPTED) {
      // Start rebuilding right away; the anchor is the dead-reckoning pose
      // recorded at entry.
      anchor = dr;
      try {
        odometry = odom::init_odometry(scan, Pose::identity(stamp), cfg.odometry);
        status.state = MapState::REBUILDING;
        status.entered_at = stamp;
        status.good_streak = 0;
        first_good_reg.reset();
        first_good_odom.reset();
      } catch (const TooFewPoints&) {
        outcome.odometry_lost = true;
        odometry.reset();
        status.state = MapState::REBUILDING;  // keep dead reckoning only
        status.entered_at = stamp;
      }
    } else if (status.state == MapState::REBUILDING && odometry.has_value() &&
               before.state == MapState::REBUILDING) {
      odom::step(*odometry, scan, cfg.odometry);
      if (odometry->last_step_fallback) {
        // Odometry lost inside the corrupted stretch: discard the patch.
        outcome.odometry_lost = true;
        odometry.reset();
      }
    }

    if (status.state == MapState::REBUILDING && status.good_streak == 1 &&
        !first_good_reg.has_value()) {
      first_good_reg = reg.pose;
      if (odometry.has_value()) {
        first_good_odom = compose(anchor, odometry->pose);
      }
    }
    if (status.state == MapState::REBUILDING && status.good_streak == 0) {
      first_good_reg.reset();
      first_good_odom.reset();
    }

    if (status.state == MapState::RESTORED) {
      RepairPatch patch;
      patch.anchor_pose = anchor;
      if (odometry.has_value()) {
        patch.points = transform_cloud(anchor, odometry->accumulated_map, Frame::map);
        if (first_good_reg.has_value() && first_good_odom.has_value()) {
          patch.seam_error =
              (first_good_odom->translation - first_good_reg->translation).norm();
        }
        current_map = merge(current_map, patch, params);
        grid = ndt::build_grid(current_map, 1.0);
        outcome.patch = patch;
      }
      odometry.reset();
      status.state = MapState::VALID;
      status.entered_at = stamp;
      status.suspect_streak = 0;
      status.good_streak = 0;
    }

    if (status.state == MapState::VALID || status.state == MapState::SUSPECT) {
      last_ndt_pose = reg.pose;
      have_ndt_pose = true;
    }

    LocalizationOutput o;
    o.source = fusion::Method::NDT_PLUS_PLUS;
    o.map_status = status.state;
    o.fitness = reg_ok ? reg.fitness : 0.0;
    // During corruption the dead-reckoning reference carries localization.
    const bool ndt_usable =
        (status.state == MapState::VALID || status.state == MapState::SUSPECT) && reg_ok;
    o.pose = ndt_usable ? reg.pose : dr;
    o.covariance = ndt_usable ? fusion::ndt_measurement_covariance(reg, cfg)
                              : ref.pose_covariance();
    outcome.outputs.push_back(o);
    outcome.status_trace.push_back(status.state);
  }

  outcome.patched_map = std::move(current_map);
  return outcome;
}

}  // namespace ndtfuse::repair
