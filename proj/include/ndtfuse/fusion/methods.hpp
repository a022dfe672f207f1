#pragma once

#include <vector>

#include "ndtfuse/fusion/ukf.hpp"
#include "ndtfuse/map_status.hpp"
#include "ndtfuse/ndt/registration.hpp"
#include "ndtfuse/odometry.hpp"
#include "ndtfuse/sim/dataset.hpp"
#include "ndtfuse/types.hpp"

namespace ndtfuse::fusion {

enum class Method { GNSS, IMU, LOAM, NDT_PLUS, NDT_PLUS_PLUS };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct MethodConfig {
  Method method = Method::NDT_PLUS_PLUS;

  // Measurement noise.
  double gnss_sigma = 0.3;              // m, fallback when a fix carries none
  double gnss_heading_sigma_deg = 2.0;  // deg
  double wheel_sigma = 0.05;            // m/s
  bool use_wheel = false;
  // Fixed correction subtracted from GNSS ENU positions (see
  // estimate_gnss_bias); zero disables it.
  Eigen::Vector2d gnss_bias_correction = Eigen::Vector2d::Zero();

  // NDT measurement covariance: inverse registration Hessian scaled by
  // ndt_r_scale, floor-clamped per block.
  double ndt_r_scale = 1.0;
  double r_floor_pos = 0.02;      // m, 1 sigma
  double r_floor_yaw_deg = 0.2;   // deg, 1 sigma

  // GNSS-jump reset supervision.
  double reset_translation = 2.0;  // m
  double reset_yaw_deg = 10.0;     // deg

  // "Movement almost zero" re-anchoring (IMU method).
  double stationary_speed = 0.05;     // m/s
  double stationary_duration = 3.0;   // s

  double submap_radius = 50.0;  // m, map restriction around the initial fix

  // Priors when anchoring a filter from GNSS (yaw uses the heading sigma).
  double init_attitude_sigma = 0.05;      // rad, roll/pitch
  double init_velocity_sigma = 0.5;       // m/s
  double init_gyro_bias_sigma = 0.005;    // rad/s
  double init_accel_bias_sigma = 0.05;    // m/s^2

  UkfParams ukf;
  ndt::RegistrationParams registration;
  odom::OdometryParams odometry;
};

struct LocalizationOutput {
  Pose pose;
  Mat6 covariance = Mat6::Identity();  // [dp, dtheta]
  Method source = Method::GNSS;
  double fitness = 1.0;  // 0 on dead-reckoned frames of lidar methods
  bool reset_flag = false;
  MapState map_status = MapState::VALID;
};

/// True iff the two poses disagree by more than the reset thresholds
/// (translation or yaw); symmetric in its pose arguments.
bool detect_jump(const Pose& ndt_pose, const Pose& reference_pose, const MethodConfig& cfg);

/// Runs one localization method over the dataset. `map` may be null for
/// GNSS/IMU/LOAM and is required for the NDT methods (MapRequired otherwise).
/// Outputs are stamped strictly increasing: per GNSS fix (GNSS), per IMU
/// sample (IMU, NDT++), per scan (LOAM, NDT+).
std::vector<LocalizationOutput> run_method(const sim::Dataset& dataset, const ndt::NdtGrid* map,
                                           const MethodConfig& cfg);

/// Trailing-window mean of GNSS-vs-reference residuals. Each entry is
/// (stamp, err_x, err_y); the stream must span at least `window` seconds
/// (InsufficientData otherwise).
Eigen::Vector2d estimate_gnss_bias(const std::vector<Vec3>& residuals, double window);

/// Pose built from one GNSS fix: ENU position plus heading yaw (identity
/// roll/pitch). Used for anchoring, resets, and jump supervision.
Pose gnss_pose(const GnssSample& s, const GnssSample& reference);

/// Measurement covariance attached to an NDT result: the inverse registration
/// Hessian scaled by ndt_r_scale, block-diagonalized and floor-clamped.
Mat6 ndt_measurement_covariance(const ndt::RegistrationResult& reg, const MethodConfig& cfg);

/// Filter anchored at a GNSS fix: position/heading from the fix, velocity
/// from the first wheel sample, priors from the config.
FilterState init_filter_from_fix(const GnssSample& fix, const sim::Dataset& data,
                                 const MethodConfig& cfg);

}  // namespace ndtfuse::fusion
