#pragma once

#include "ndtfuse/types.hpp"

namespace ndtfuse::fusion {

struct UkfParams {
  // Scaled unscented transform.
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;
  // Process noise, scaled per step by dt (velocity/orientation) or sqrt(dt)
  // (bias random walks). Small floors keep the covariance well conditioned.
  double sigma_accel = 0.05;          // m/s^2
  double sigma_gyro = 0.005;          // rad/s
  double sigma_pos_floor = 1e-4;      // m/s equivalent position noise
  double sigma_gyro_bias_rw = 1e-5;   // rad/s per sqrt(s)
  double sigma_accel_bias_rw = 1e-4;  // m/s^2 per sqrt(s)
  double gravity = 9.81;              // m/s^2, down
};

/// Strapdown filter state: full mean plus the 15x15 covariance of the error
/// state [dp, dv, dtheta, dbg, dba] (orientation error as a rotation vector).
struct FilterState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Vec3 gyro_bias = Vec3::Zero();
  Vec3 accel_bias = Vec3::Zero();
  Eigen::Matrix<double, 15, 15> covariance = Eigen::Matrix<double, 15, 15>::Identity();
  double stamp = 0.0;

  Pose pose() const { return Pose{position, orientation, stamp}; }
  /// [dp, dtheta] covariance block for localization outputs.
  Mat6 pose_covariance() const;
};

/// Sigma-point propagation through strapdown kinematics: orientation from
/// bias-corrected gyro, velocity from bias-corrected gravity-compensated
/// accel, position from velocity. Throws NonPositiveDt for dt outside (0, 0.1].
FilterState ukf_predict(const FilterState& state, const ImuSample& imu, double dt,
                        const UkfParams& params = {});

/// Unscented measurement updates. All throw SingularInnovation when the
/// innovation covariance cannot be factorized.
FilterState ukf_update_position(const FilterState& state, const Vec3& z, const Mat3& r,
                                const UkfParams& params = {});
FilterState ukf_update_pose(const FilterState& state, const Pose& z, const Mat6& r,
                            const UkfParams& params = {});
/// Scalar body-forward speed (wheel) measurement.
FilterState ukf_update_speed(const FilterState& state, double speed, double r,
                             const UkfParams& params = {});

}  // namespace ndtfuse::fusion
