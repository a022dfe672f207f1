#include "ndtfuse/fusion/methods.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geodesy.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::fusion {

namespace {

using ndt::NdtGrid;
using ndt::RegistrationResult;
using sim::Dataset;

Pose apply_bias_correction(Pose pose, const Eigen::Vector2d& correction) {
  pose.translation.x() -= correction.x();
  pose.translation.y() -= correction.y();
  return pose;
}

Mat6 gnss_pose_covariance(const GnssSample& s, const MethodConfig& cfg) {
  const double acc = std::max(s.horizontal_accuracy, 0.01);
  Mat6 cov = Mat6::Zero();
  cov.block<3, 3>(0, 0) = acc * acc * Mat3::Identity();
  const double yaw_var = std::pow(deg2rad(cfg.gnss_heading_sigma_deg), 2);
  cov.block<3, 3>(3, 3) = Vec3(0.25, 0.25, std::max(yaw_var, 1e-6)).asDiagonal();
  return cov;
}

}  // namespace

// Scaled inverse Hessian, block-diagonalized and floor-clamped (cross
// correlations dropped).
Mat6 ndt_measurement_covariance(const RegistrationResult& reg, const MethodConfig& cfg) {
  Mat6 cov = Mat6::Identity();
  Eigen::LDLT<Mat6> ldlt(reg.hessian);
  bool ok = ldlt.info() == Eigen::Success;
  if (ok) {
    const Mat6 inv = ldlt.solve(Mat6::Identity());
    if (inv.allFinite()) cov = cfg.ndt_r_scale * inv;
    else ok = false;
  }
  const double pos_floor = cfg.r_floor_pos * cfg.r_floor_pos;
  const double rot_floor = std::pow(deg2rad(cfg.r_floor_yaw_deg), 2);
  Mat6 out = Mat6::Zero();
  for (int block = 0; block < 2; ++block) {
    const double floor = block == 0 ? pos_floor : rot_floor;
    Mat3 b = ok ? Mat3(cov.block<3, 3>(3 * block, 3 * block)) : Mat3::Zero();
    b = 0.5 * (b + b.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(b);
    const Vec3 lambda = eig.eigenvalues().cwiseMax(floor).cwiseMin(1e4);
    out.block<3, 3>(3 * block, 3 * block) =
        eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  }
  return out;
}

FilterState init_filter_from_fix(const GnssSample& fix, const sim::Dataset& data,
                                 const MethodConfig& cfg) {
  FilterState f;
  const Pose anchor = gnss_pose(fix, data.reference);
  f.position = anchor.translation;
  f.orientation = anchor.rotation;
  f.stamp = fix.stamp;
  if (!data.wheel.empty()) {
    const double yaw = yaw_of(anchor);
    f.velocity = data.wheel.front().speed * Vec3(std::cos(yaw), std::sin(yaw), 0.0);
  }
  const double acc = std::max(fix.horizontal_accuracy, 0.01);
  Eigen::Matrix<double, 15, 1> diag;
  diag.segment<3>(0).setConstant(acc * acc);
  diag.segment<3>(3).setConstant(cfg.init_velocity_sigma * cfg.init_velocity_sigma);
  const double att = cfg.init_attitude_sigma * cfg.init_attitude_sigma;
  diag.segment<3>(6) = Vec3(att, att, std::pow(deg2rad(cfg.gnss_heading_sigma_deg), 2));
  diag.segment<3>(9).setConstant(cfg.init_gyro_bias_sigma * cfg.init_gyro_bias_sigma);
  diag.segment<3>(12).setConstant(cfg.init_accel_bias_sigma * cfg.init_accel_bias_sigma);
  f.covariance = diag.asDiagonal();
  return f;
}

namespace {

struct EventCursor {
  const Dataset& data;
  std::size_t imu = 0, gnss = 0, wheel = 0, scan = 0;

  enum class Kind { Imu, Gnss, Wheel, Scan, Done };

  std::pair<Kind, double> peek() const {
    Kind kind = Kind::Done;
    double stamp = std::numeric_limits<double>::max();
    // Tie order: predict (imu) before corrections, scans last.
    if (scan < data.scan_stamps.size() && data.scan_stamps[scan] < stamp) {
      stamp = data.scan_stamps[scan];
      kind = Kind::Scan;
    }
    if (wheel < data.wheel.size() && data.wheel[wheel].stamp <= stamp) {
      stamp = data.wheel[wheel].stamp;
      kind = Kind::Wheel;
    }
    if (gnss < data.gnss.size() && data.gnss[gnss].stamp <= stamp) {
      stamp = data.gnss[gnss].stamp;
      kind = Kind::Gnss;
    }
    if (imu < data.imu.size() && data.imu[imu].stamp <= stamp) {
      stamp = data.imu[imu].stamp;
      kind = Kind::Imu;
    }
    return {kind, stamp};
  }
};

std::vector<LocalizationOutput> run_gnss(const Dataset& data, const MethodConfig& cfg) {
  if (data.gnss.empty()) throw StreamEmpty("GNSS method: no GNSS samples");
  std::vector<LocalizationOutput> out;
  out.reserve(data.gnss.size());
  double last_yaw = 0.0;
  for (const GnssSample& s : data.gnss) {
    Pose pose = apply_bias_correction(gnss_pose(s, data.reference), cfg.gnss_bias_correction);
    if (!s.heading.has_value()) {
      pose.rotation = Quat(Eigen::AngleAxisd(last_yaw, Vec3::UnitZ()));
    }
    last_yaw = yaw_of(pose);
    LocalizationOutput o;
    o.pose = pose;
    o.covariance = gnss_pose_covariance(s, cfg);
    o.source = Method::GNSS;
    out.push_back(o);
  }
  return out;
}

std::vector<LocalizationOutput> run_imu(const Dataset& data, const MethodConfig& cfg) {
  if (data.gnss.empty()) throw StreamEmpty("IMU method: no GNSS samples");
  if (data.imu.empty()) throw StreamEmpty("IMU method: no IMU samples");

  std::vector<LocalizationOutput> out;
  out.reserve(data.imu.size());
  EventCursor cur{data};
  bool initialized = false;
  FilterState filter;
  double slow_since = -1.0;
  double latest_speed = 0.0;
  bool have_wheel = false;

  while (true) {
    const auto [kind, stamp] = cur.peek();
    if (kind == EventCursor::Kind::Done) break;
    switch (kind) {
      case EventCursor::Kind::Imu: {
        const ImuSample& s = data.imu[cur.imu++];
        if (!initialized) break;
        const double dt = s.stamp - filter.stamp;
        if (dt <= 1e-9) break;
        filter = ukf_predict(filter, s, dt, cfg.ukf);
        LocalizationOutput o;
        o.pose = filter.pose();
        o.covariance = filter.pose_covariance();
        o.source = Method::IMU;
        out.push_back(o);
        break;
      }
      case EventCursor::Kind::Gnss: {
        const GnssSample& s = data.gnss[cur.gnss++];
        if (!initialized) {
          filter = init_filter_from_fix(s, data, cfg);
          initialized = true;
          break;
        }
        // Re-anchor only during prolonged near-zero movement.
        const double speed = have_wheel ? latest_speed : filter.velocity.norm();
        const bool slow = std::abs(speed) < cfg.stationary_speed;
        if (slow && slow_since >= 0.0 && s.stamp - slow_since > cfg.stationary_duration) {
          const double acc = std::max(s.horizontal_accuracy, 0.01);
          const Vec3 z = gnss_pose(s, data.reference).translation;
          filter = ukf_update_position(filter, z, acc * acc * Mat3::Identity(), cfg.ukf);
        }
        break;
      }
      case EventCursor::Kind::Wheel: {
        const WheelSample& s = data.wheel[cur.wheel++];
        have_wheel = true;
        latest_speed = s.speed;
        if (std::abs(s.speed) < cfg.stationary_speed) {
          if (slow_since < 0.0) slow_since = s.stamp;
        } else {
          slow_since = -1.0;
        }
        break;
      }
      case EventCursor::Kind::Scan:
        cur.scan++;
        break;
      case EventCursor::Kind::Done:
        break;
    }
  }
  return out;
}

std::vector<LocalizationOutput> run_loam(const Dataset& data, const MethodConfig& cfg) {
  if (data.gnss.empty()) throw StreamEmpty("LOAM method: no GNSS samples");
  if (data.scan_stamps.empty()) throw StreamEmpty("LOAM method: no scans");

  const Pose anchor = gnss_pose(data.gnss.front(), data.reference);
  std::vector<LocalizationOutput> out;
  out.reserve(data.scan_stamps.size());

  odom::OdometryState state;
  for (std::size_t k = 0; k < data.scan_stamps.size(); ++k) {
    const PointCloud scan = data.scan_at(k);
    if (!state.initialized) {
      try {
        state = odom::init_odometry(scan, anchor, cfg.odometry);
      } catch (const TooFewPoints&) {
        continue;  // wait for a usable first scan
      }
    } else {
      odom::step(state, scan, cfg.odometry);
    }
    LocalizationOutput o;
    o.pose = state.pose;
    o.covariance = Mat6::Identity() * 0.01;
    o.source = Method::LOAM;
    o.fitness = state.last_step_fallback ? 0.0 : 1.0;
    out.push_back(o);
  }
  if (out.empty()) throw StreamEmpty("LOAM method: no usable scans");
  return out;
}

const GnssSample* nearest_gnss(const Dataset& data, double stamp, double gate = 0.2) {
  const GnssSample* best = nullptr;
  double best_dt = gate;
  // gnss is stamped in order; binary search would do, linear is fine at 5 Hz.
  for (const GnssSample& s : data.gnss) {
    const double dt = std::abs(s.stamp - stamp);
    if (dt <= best_dt) {
      best_dt = dt;
      best = &s;
    }
    if (s.stamp > stamp + gate) break;
  }
  return best;
}

std::vector<LocalizationOutput> run_ndt_plus(const Dataset& data, const NdtGrid* map,
                                             const MethodConfig& cfg) {
  if (map == nullptr) throw MapRequired("NDT+ needs a map grid");
  if (data.gnss.empty()) throw StreamEmpty("NDT+ method: no GNSS samples");
  if (data.scan_stamps.empty()) throw StreamEmpty("NDT+ method: no scans");

  std::vector<LocalizationOutput> out;
  out.reserve(data.scan_stamps.size());
  bool have_pose = false;
  Pose previous;

  for (std::size_t k = 0; k < data.scan_stamps.size(); ++k) {
    const double stamp = data.scan_stamps[k];
    const GnssSample* fix = nearest_gnss(data, stamp);
    if (!have_pose && fix == nullptr) continue;  // cannot start yet

    Pose init = have_pose ? previous : gnss_pose(*fix, data.reference);
    init.stamp = stamp;
    const PointCloud scan = data.scan_at(k);

    LocalizationOutput o;
    o.source = Method::NDT_PLUS;
    bool emitted = false;
    try {
      RegistrationResult reg = ndt::register_scan(*map, scan, init, cfg.registration);
      if (fix != nullptr && detect_jump(reg.pose, gnss_pose(*fix, data.reference), cfg)) {
        // Sudden disagreement with GNSS: restart the match from the fix.
        const Pose reset_init = gnss_pose(*fix, data.reference);
        reg = ndt::register_scan(*map, scan, reset_init, cfg.registration);
        o.reset_flag = true;
      }
      o.pose = reg.pose;
      o.covariance = ndt_measurement_covariance(reg, cfg);
      o.fitness = reg.fitness;
      previous = reg.pose;
      have_pose = true;
      emitted = true;
    } catch (const Error&) {
      // Registration unusable; hold the last pose (or the fix) and flag it.
      o.pose = have_pose ? previous : gnss_pose(*fix, data.reference);
      o.pose.stamp = stamp;
      o.fitness = 0.0;
      o.covariance = Mat6::Identity();
      previous = o.pose;
      have_pose = true;
      emitted = true;
    }
    if (emitted) out.push_back(o);
  }
  if (out.empty()) throw StreamEmpty("NDT+ method: no usable scans");
  return out;
}

std::vector<LocalizationOutput> run_ndt_plus_plus(const Dataset& data, const NdtGrid* map,
                                                  const MethodConfig& cfg) {
  if (map == nullptr) throw MapRequired("NDT++ needs a map grid");
  if (data.gnss.empty()) throw StreamEmpty("NDT++ method: no GNSS samples");
  if (data.imu.empty()) throw StreamEmpty("NDT++ method: no IMU samples");
  if (data.scan_stamps.empty()) throw StreamEmpty("NDT++ method: no scans");

  std::vector<LocalizationOutput> out;
  out.reserve(data.imu.size());
  EventCursor cur{data};

  bool initialized = false;
  FilterState filter;
  NdtGrid submap;
  const NdtGrid* active = nullptr;  // submap until the first good match
  double last_fitness = 0.0;
  bool pending_reset = false;
  const GnssSample* latest_fix = nullptr;

  while (true) {
    const auto [kind, stamp] = cur.peek();
    if (kind == EventCursor::Kind::Done) break;
    switch (kind) {
      case EventCursor::Kind::Imu: {
        const ImuSample& s = data.imu[cur.imu++];
        if (!initialized) break;
        const double dt = s.stamp - filter.stamp;
        if (dt <= 1e-9) break;
        filter = ukf_predict(filter, s, dt, cfg.ukf);
        LocalizationOutput o;
        o.pose = filter.pose();
        o.covariance = filter.pose_covariance();
        o.source = Method::NDT_PLUS_PLUS;
        o.fitness = last_fitness;
        o.reset_flag = pending_reset;
        pending_reset = false;
        out.push_back(o);
        break;
      }
      case EventCursor::Kind::Gnss: {
        const GnssSample& s = data.gnss[cur.gnss++];
        latest_fix = &s;
        if (!initialized) {
          filter = init_filter_from_fix(s, data, cfg);
          // The initial fix restricts matching to a submap around it.
          submap = map->filtered_by_radius(filter.position, cfg.submap_radius);
          active = &submap;
          initialized = true;
        }
        break;
      }
      case EventCursor::Kind::Wheel: {
        const WheelSample& s = data.wheel[cur.wheel++];
        if (initialized && cfg.use_wheel) {
          filter = ukf_update_speed(filter, s.speed, cfg.wheel_sigma * cfg.wheel_sigma, cfg.ukf);
        }
        break;
      }
      case EventCursor::Kind::Scan: {
        const std::size_t k = cur.scan++;
        if (!initialized) break;
        Pose init = filter.pose();
        init.stamp = stamp;
        const PointCloud scan = data.scan_at(k);
        try {
          RegistrationResult reg = ndt::register_scan(*active, scan, init, cfg.registration);
          const GnssSample* fix =
              (latest_fix != nullptr && std::abs(latest_fix->stamp - stamp) <= 0.2) ? latest_fix
                                                                                    : nullptr;
          if (fix != nullptr && detect_jump(reg.pose, gnss_pose(*fix, data.reference), cfg)) {
            // Reset: re-anchor the filter at the fix and restrict the map.
            const Pose anchor = gnss_pose(*fix, data.reference);
            filter.position = anchor.translation;
            filter.orientation = anchor.rotation;
            const double acc = std::max(fix->horizontal_accuracy, 0.01);
            filter.covariance.block<3, 3>(0, 0) = acc * acc * Mat3::Identity();
            const double att = cfg.init_attitude_sigma * cfg.init_attitude_sigma;
            filter.covariance.block<3, 3>(6, 6) =
                Vec3(att, att, std::pow(deg2rad(cfg.gnss_heading_sigma_deg), 2)).asDiagonal();
            submap = map->filtered_by_radius(anchor.translation, cfg.submap_radius);
            active = &submap;
            pending_reset = true;
            Pose reset_init = anchor;
            reset_init.stamp = stamp;
            reg = ndt::register_scan(*active, scan, reset_init, cfg.registration);
          }
          filter = ukf_update_pose(filter, reg.pose, ndt_measurement_covariance(reg, cfg),
                                   cfg.ukf);
          last_fitness = reg.fitness;
          // The submap restriction only serves pose acquisition; once a
          // match went through, the full grid takes over.
          active = map;
        } catch (const Error&) {
          last_fitness = 0.0;  // dead-reckon through this scan
        }
        break;
      }
      case EventCursor::Kind::Done:
        break;
    }
  }
  if (out.empty()) throw StreamEmpty("NDT++ method: no outputs produced");
  return out;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::GNSS: return "GNSS";
    case Method::IMU: return "IMU";
    case Method::LOAM: return "LOAM";
    case Method::NDT_PLUS: return "NDT_PLUS";
    case Method::NDT_PLUS_PLUS: return "NDT_PLUS_PLUS";
  }
  return "GNSS";
}

Method method_from_string(const std::string& s) {
  if (s == "GNSS") return Method::GNSS;
  if (s == "IMU") return Method::IMU;
  if (s == "LOAM") return Method::LOAM;
  if (s == "NDT_PLUS" || s == "NDT+") return Method::NDT_PLUS;
  if (s == "NDT_PLUS_PLUS" || s == "NDT++") return Method::NDT_PLUS_PLUS;
  throw ConfigError("unknown method: " + s);
}

Pose gnss_pose(const GnssSample& s, const GnssSample& reference) {
  Pose pose;
  pose.translation = wgs84_to_enu(s, reference);
  if (s.heading.has_value()) {
    pose.rotation = Quat(Eigen::AngleAxisd(heading_to_yaw(*s.heading), Vec3::UnitZ()));
  }
  pose.stamp = s.stamp;
  return pose;
}

bool detect_jump(const Pose& ndt_pose, const Pose& reference_pose, const MethodConfig& cfg) {
  const double dt = (ndt_pose.translation - reference_pose.translation).norm();
  const double dyaw =
      std::abs(wrap_angle(yaw_of(ndt_pose) - yaw_of(reference_pose)));
  return dt > cfg.reset_translation || rad2deg(dyaw) > cfg.reset_yaw_deg;
}

std::vector<LocalizationOutput> run_method(const Dataset& dataset, const NdtGrid* map,
                                           const MethodConfig& cfg) {
  switch (cfg.method) {
    case Method::GNSS: return run_gnss(dataset, cfg);
    case Method::IMU: return run_imu(dataset, cfg);
    case Method::LOAM: return run_loam(dataset, cfg);
    case Method::NDT_PLUS: return run_ndt_plus(dataset, map, cfg);
    case Method::NDT_PLUS_PLUS: return run_ndt_plus_plus(dataset, map, cfg);
  }
  throw Error("run_method: unhandled method");
}

Eigen::Vector2d estimate_gnss_bias(const std::vector<Vec3>& residuals, double window) {
  if (residuals.size() < 2 ||
      residuals.back().x() - residuals.front().x() < window) {
    throw InsufficientData("estimate_gnss_bias: need at least " + std::to_string(window) +
                           " s of residuals");
  }
  const double cutoff = residuals.back().x() - window;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  std::size_t n = 0;
  for (const Vec3& r : residuals) {
    if (r.x() < cutoff) continue;
    mean += Eigen::Vector2d(r.y(), r.z());
    ++n;
  }
  if (n == 0) throw InsufficientData("estimate_gnss_bias: empty window");
  return mean / static_cast<double>(n);
}

}  // namespace ndtfuse::fusion
