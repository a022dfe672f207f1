#include "ndtfuse/fusion/ukf.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::fusion {

namespace {

constexpr int kDim = 15;
using MatN = Eigen::Matrix<double, kDim, kDim>;
using VecN = Eigen::Matrix<double, kDim, 1>;

// Error-state layout: [dp, dv, dtheta, dbg, dba].

struct Weights {
  double gamma;
  double w0_mean, w0_cov, wi;
};

Weights make_weights(const UkfParams& p) {
  const double lambda = p.alpha * p.alpha * (kDim + p.kappa) - kDim;
  Weights w;
  w.gamma = std::sqrt(kDim + lambda);
  w.w0_mean = lambda / (kDim + lambda);
  w.w0_cov = w.w0_mean + (1.0 - p.alpha * p.alpha + p.beta);
  w.wi = 0.5 / (kDim + lambda);
  return w;
}

// Lower-triangular square root of P, with an eigenvalue-clamp fallback for
// semi-definite matrices.
MatN covariance_sqrt(const MatN& p) {
  MatN sym = 0.5 * (p + p.transpose());
  Eigen::LLT<MatN> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  // Semi-definite fallback: eigendecomposition square root (any A with
  // A A^T = P serves the unscented transform; zero modes get zero columns).
  Eigen::SelfAdjointEigenSolver<MatN> eig(sym);
  const VecN lambda = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();
}

void symmetrize_clamp(MatN& p) {
  p = 0.5 * (p + p.transpose()).eval();
  Eigen::LLT<MatN> llt(p);
  if (llt.info() == Eigen::Success) return;
  Eigen::SelfAdjointEigenSolver<MatN> eig(p);
  if (eig.eigenvalues().minCoeff() >= 0.0) return;
  VecN lambda = eig.eigenvalues().cwiseMax(0.0);
  p = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  p = 0.5 * (p + p.transpose()).eval();
}

// The sigma deviations are propagated and measured in delta form throughout:
// every quantity entering the weighted sums stays O(gamma * sigma), which
// keeps the large scaled-UT weights free of cancellation noise.

std::array<VecN, 2 * kDim + 1> sigma_deltas(const MatN& covariance, double gamma) {
  const MatN sqrt_p = covariance_sqrt(covariance);
  std::array<VecN, 2 * kDim + 1> deltas;
  deltas[0].setZero();
  for (int j = 0; j < kDim; ++j) {
    deltas[1 + j] = gamma * sqrt_p.col(j);
    deltas[1 + kDim + j] = -gamma * sqrt_p.col(j);
  }
  return deltas;
}

FilterState apply_delta(const FilterState& mean, const VecN& d) {
  FilterState out = mean;
  out.position += d.segment<3>(0);
  out.velocity += d.segment<3>(3);
  out.orientation = (mean.orientation * quat_exp(d.segment<3>(6))).normalized();
  out.gyro_bias += d.segment<3>(9);
  out.accel_bias += d.segment<3>(12);
  return out;
}

template <int M>
using MeasDelta = std::function<Eigen::Matrix<double, M, 1>(const VecN&)>;

// Generic unscented update. `h_delta` maps an error-state deviation to the
// corresponding measurement-space deviation z_i - z_0 (stably, in smalls).
template <int M>
FilterState unscented_update(const FilterState& state, const UkfParams& params,
                             const Eigen::Matrix<double, M, 1>& innovation_vs_sigma0,
                             const Eigen::Matrix<double, M, M>& r, const MeasDelta<M>& h_delta) {
  using VecM = Eigen::Matrix<double, M, 1>;
  using MatM = Eigen::Matrix<double, M, M>;

  const Weights w = make_weights(params);
  const auto deltas = sigma_deltas(state.covariance, w.gamma);

  std::array<VecM, 2 * kDim + 1> zd;
  zd[0].setZero();
  for (int i = 1; i < 2 * kDim + 1; ++i) zd[i] = h_delta(deltas[i]);

  VecM z_mean_dev = VecM::Zero();
  for (int j = 0; j < kDim; ++j) z_mean_dev += w.wi * (zd[1 + j] + zd[1 + kDim + j]);

  MatM s = r;
  Eigen::Matrix<double, kDim, M> c = Eigen::Matrix<double, kDim, M>::Zero();
  {
    const VecM nu0 = -z_mean_dev;  // zd[0] - z_mean_dev
    s += w.w0_cov * nu0 * nu0.transpose();
  }
  for (int i = 1; i < 2 * kDim + 1; ++i) {
    const VecM nu = zd[i] - z_mean_dev;
    s += w.wi * nu * nu.transpose();
    c += w.wi * deltas[i] * nu.transpose();
  }

  Eigen::LLT<MatM> llt(s);
  if (llt.info() != Eigen::Success) {
    throw SingularInnovation("ukf_update: innovation covariance not positive definite");
  }
  const Eigen::Matrix<double, kDim, M> gain = llt.solve(c.transpose()).transpose();
  const VecN dx = gain * (innovation_vs_sigma0 - z_mean_dev);

  FilterState out = apply_delta(state, dx);
  MatN p = state.covariance - gain * s * gain.transpose();
  symmetrize_clamp(p);
  out.covariance = p;
  return out;
}

}  // namespace

Mat6 FilterState::pose_covariance() const {
  Mat6 out;
  out.block<3, 3>(0, 0) = covariance.block<3, 3>(0, 0);
  out.block<3, 3>(0, 3) = covariance.block<3, 3>(0, 6);
  out.block<3, 3>(3, 0) = covariance.block<3, 3>(6, 0);
  out.block<3, 3>(3, 3) = covariance.block<3, 3>(6, 6);
  return out;
}

FilterState ukf_predict(const FilterState& state, const ImuSample& imu, double dt,
                        const UkfParams& params) {
  if (!(dt > 0.0) || dt > 0.1) {
    throw NonPositiveDt("ukf_predict: dt must lie in (0, 0.1], got " + std::to_string(dt));
  }

  const Weights w = make_weights(params);
  const auto deltas = sigma_deltas(state.covariance, w.gamma);
  const Vec3 gravity(0.0, 0.0, -params.gravity);

  // Central path.
  const Vec3 omega0 = imu.angular_velocity - state.gyro_bias;
  const Vec3 accel_body0 = imu.linear_acceleration - state.accel_bias;
  const Vec3 a_world0 = state.orientation * accel_body0 + gravity;
  FilterState center;
  center.position = state.position + state.velocity * dt + 0.5 * a_world0 * dt * dt;
  center.velocity = state.velocity + a_world0 * dt;
  center.orientation = (state.orientation * quat_exp(omega0 * dt)).normalized();
  center.gyro_bias = state.gyro_bias;
  center.accel_bias = state.accel_bias;
  center.stamp = state.stamp + dt;

  // Deviation paths, exact delta-form kinematics around the central path.
  const Quat back_rot = quat_exp(omega0 * dt).conjugate();
  std::array<VecN, 2 * kDim + 1> propagated;
  propagated[0].setZero();
  for (int i = 1; i < 2 * kDim + 1; ++i) {
    const VecN& d = deltas[i];
    const Vec3 dp = d.segment<3>(0);
    const Vec3 dv = d.segment<3>(3);
    const Vec3 dtheta = d.segment<3>(6);
    const Vec3 dbg = d.segment<3>(9);
    const Vec3 dba = d.segment<3>(12);

    const Quat rot = quat_exp(dtheta);
    // Acceleration difference against the central path; gravity cancels.
    const Vec3 da_world = state.orientation * (rot * (accel_body0 - dba) - accel_body0);
    VecN out;
    out.segment<3>(0) = dp + dv * dt + 0.5 * da_world * dt * dt;
    out.segment<3>(3) = dv + da_world * dt;
    // log(exp(-omega0 dt) * exp(dtheta) * exp((omega0 - dbg) dt))
    out.segment<3>(6) =
        quat_log(back_rot * rot * quat_exp((omega0 - dbg) * dt));
    out.segment<3>(9) = dbg;
    out.segment<3>(12) = dba;
    propagated[i] = out;
  }

  VecN mean_dev = VecN::Zero();
  for (int j = 0; j < kDim; ++j) {
    mean_dev += w.wi * (propagated[1 + j] + propagated[1 + kDim + j]);
  }

  FilterState out = apply_delta(center, mean_dev);
  out.stamp = center.stamp;

  MatN p = MatN::Zero();
  {
    const VecN r0 = -mean_dev;
    p += w.w0_cov * r0 * r0.transpose();
  }
  for (int i = 1; i < 2 * kDim + 1; ++i) {
    // Orientation residuals recentered on the new mean; the other blocks are
    // plain differences.
    VecN ri = propagated[i] - mean_dev;
    ri.segment<3>(6) = quat_log(quat_exp(mean_dev.segment<3>(6)).conjugate() *
                                quat_exp(propagated[i].segment<3>(6)));
    p += w.wi * ri * ri.transpose();
  }

  // Additive process noise, strictly positive on every axis.
  VecN q_diag;
  q_diag.segment<3>(0).setConstant(std::pow(std::max(params.sigma_pos_floor, 1e-8) * dt, 2));
  q_diag.segment<3>(3).setConstant(std::pow(std::max(params.sigma_accel, 1e-8) * dt, 2));
  q_diag.segment<3>(6).setConstant(std::pow(std::max(params.sigma_gyro, 1e-8) * dt, 2));
  q_diag.segment<3>(9).setConstant(std::max(params.sigma_gyro_bias_rw, 1e-10) *
                                   std::max(params.sigma_gyro_bias_rw, 1e-10) * dt);
  q_diag.segment<3>(12).setConstant(std::max(params.sigma_accel_bias_rw, 1e-10) *
                                    std::max(params.sigma_accel_bias_rw, 1e-10) * dt);
  p += q_diag.asDiagonal();

  symmetrize_clamp(p);
  out.covariance = p;
  return out;
}

FilterState ukf_update_position(const FilterState& state, const Vec3& z, const Mat3& r,
                                const UkfParams& params) {
  const Vec3 innovation = z - state.position;
  return unscented_update<3>(state, params, innovation, r,
                             [](const VecN& d) -> Vec3 { return d.segment<3>(0); });
}

FilterState ukf_update_pose(const FilterState& state, const Pose& z, const Mat6& r,
                            const UkfParams& params) {
  Vec6 innovation;
  innovation.head<3>() = z.translation - state.position;
  innovation.tail<3>() = quat_log(state.orientation.conjugate() * z.rotation);
  return unscented_update<6>(state, params, innovation, r, [](const VecN& d) -> Vec6 {
    Vec6 h;
    h.head<3>() = d.segment<3>(0);
    h.tail<3>() = d.segment<3>(6);
    return h;
  });
}

FilterState ukf_update_speed(const FilterState& state, double speed, double r,
                             const UkfParams& params) {
  const Vec3 body_vel0 = state.orientation.conjugate() * state.velocity;
  Eigen::Matrix<double, 1, 1> innovation, rr;
  innovation(0) = speed - body_vel0.x();
  rr(0) = r;
  const Quat q0_conj = state.orientation.conjugate();
  return unscented_update<1>(
      state, params, innovation, rr,
      [&](const VecN& d) -> Eigen::Matrix<double, 1, 1> {
        const Quat rot_inv = quat_exp(d.segment<3>(6)).conjugate();
        const Vec3 dv_body = q0_conj * d.segment<3>(3);
        // (exp(-dtheta) (w0 + dv_b) - w0).x, all smalls except w0 itself.
        const Vec3 delta = rot_inv * (body_vel0 + dv_body) - body_vel0;
        Eigen::Matrix<double, 1, 1> h;
        h(0) = delta.x();
        return h;
      });
}

}  // namespace ndtfuse::fusion
