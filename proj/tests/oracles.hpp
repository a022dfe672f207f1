#pragma once

// Independent reference implementations used by the test suites. These stay
// deliberately naive (dense 4x4 products, two-pass statistics, textbook
// series) and must not call into the code paths they check.

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <vector>

#include "ndtfuse/types.hpp"

namespace oracles {

using ndtfuse::Mat3;
using ndtfuse::Vec3;
using Mat4 = Eigen::Matrix4d;

inline Mat4 pose_to_mat4(const ndtfuse::Pose& p) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = p.rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = p.translation;
  return m;
}

/// Two-pass sample mean and covariance (1/m normalization).
inline std::pair<Vec3, Mat3> two_pass_mean_cov(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  return {mean, cov};
}

/// Textbook multivariate normal density via dense inverse and determinant.
inline double gaussian_density(const Vec3& mean, const Mat3& cov, const Vec3& x) {
  const double det = cov.determinant();
  const Mat3 inv = cov.inverse();
  const Vec3 d = x - mean;
  const double quad = d.dot(inv * d);
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::exp(-0.5 * quad) / std::sqrt(two_pi * two_pi * two_pi * det);
}

/// Meridian arc length from the equator (Helmert expansion).
inline double meridian_arc(double latitude_deg) {
  constexpr double a = 6378137.0;
  constexpr double f = 1.0 / 298.257223563;
  const double e2 = f * (2.0 - f);
  const double e4 = e2 * e2;
  const double e6 = e4 * e2;
  const double phi = latitude_deg * M_PI / 180.0;
  return a * ((1.0 - e2 / 4.0 - 3.0 * e4 / 64.0 - 5.0 * e6 / 256.0) * phi -
              (3.0 * e2 / 8.0 + 3.0 * e4 / 32.0 + 45.0 * e6 / 1024.0) * std::sin(2.0 * phi) +
              (15.0 * e4 / 256.0 + 45.0 * e6 / 1024.0) * std::sin(4.0 * phi) -
              (35.0 * e6 / 3072.0) * std::sin(6.0 * phi));
}

/// Central finite differences of a scalar function of an n-vector.
inline Eigen::VectorXd central_differences(const std::function<double(const Eigen::VectorXd&)>& f,
                                           const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Standard linear Kalman filter over [position(3); velocity(3)] with direct
/// position measurements, used as the UKF equivalence oracle.
struct LinearKf {
  Eigen::Matrix<double, 6, 1> mean = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::Matrix<double, 6, 6> cov = Eigen::Matrix<double, 6, 6>::Identity();

  void predict(const Vec3& accel, double dt, const Eigen::Matrix<double, 6, 6>& q) {
    Eigen::Matrix<double, 6, 6> f = Eigen::Matrix<double, 6, 6>::Identity();
    f.topRightCorner<3, 3>() = dt * Mat3::Identity();
    Eigen::Matrix<double, 6, 3> b = Eigen::Matrix<double, 6, 3>::Zero();
    b.topLeftCorner<3, 3>() = 0.5 * dt * dt * Mat3::Identity();
    b.bottomLeftCorner<3, 3>() = dt * Mat3::Identity();
    mean = f * mean + b * accel;
    cov = f * cov * f.transpose() + q;
  }

  void update(const Vec3& z, const Mat3& r) {
    Eigen::Matrix<double, 3, 6> h = Eigen::Matrix<double, 3, 6>::Zero();
    h.topLeftCorner<3, 3>().setIdentity();
    const Mat3 s = h * cov * h.transpose() + r;
    const Eigen::Matrix<double, 6, 3> k =
        s.llt().solve(h * cov.transpose()).transpose();
    mean += k * (z - h * mean);
    cov -= k * s * k.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
  }
};

}  // namespace oracles
