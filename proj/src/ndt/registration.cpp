#include "ndtfuse/ndt/registration.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::ndt {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct AngleBasis {
  // R = Rz(yaw) * Ry(pitch) * Rx(roll) and its first/second derivatives.
  Mat3 r;
  Mat3 d_roll, d_pitch, d_yaw;
  Mat3 dd_rr, dd_rp, dd_ry, dd_pp, dd_py, dd_yy;
};

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}
Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}
Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}
Mat3 drot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return m;
}
Mat3 drot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}
Mat3 drot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

AngleBasis angle_basis(double roll, double pitch, double yaw) {
  const Mat3 rx = rot_x(roll), ry = rot_y(pitch), rz = rot_z(yaw);
  const Mat3 dx = drot_x(roll), dy = drot_y(pitch), dz = drot_z(yaw);
  // Second derivative of a single-axis rotation is -R on the rotating block.
  Mat3 ddx, ddy, ddz;
  {
    const double c = std::cos(roll), s = std::sin(roll);
    ddx << 0, 0, 0, 0, -c, s, 0, -s, -c;
  }
  {
    const double c = std::cos(pitch), s = std::sin(pitch);
    ddy << -c, 0, -s, 0, 0, 0, s, 0, -c;
  }
  {
    const double c = std::cos(yaw), s = std::sin(yaw);
    ddz << -c, s, 0, -s, -c, 0, 0, 0, 0;
  }

  AngleBasis b;
  b.r = rz * ry * rx;
  b.d_roll = rz * ry * dx;
  b.d_pitch = rz * dy * rx;
  b.d_yaw = dz * ry * rx;
  b.dd_rr = rz * ry * ddx;
  b.dd_rp = rz * dy * dx;
  b.dd_ry = dz * ry * dx;
  b.dd_pp = rz * ddy * rx;
  b.dd_py = dz * dy * rx;
  b.dd_yy = ddz * ry * rx;
  return b;
}

struct Objective {
  double score = 0.0;
  double fitness = 0.0;
  Vec6 gradient = Vec6::Zero();
  Mat6 hessian = Mat6::Zero();
};

// Score-only evaluation over pre-transformed points z with correction p.
// The correction rotates about `origin` (world coordinates are recovered by
// adding it back after the transform).
std::pair<double, double> evaluate_score(const NdtGrid& grid, const std::vector<Vec3>& z,
                                         const Vec6& p, double penalty,
                                         const Vec3& origin = Vec3::Zero()) {
  const AngleBasis b = angle_basis(p[3], p[4], p[5]);
  const Vec3 t = p.head<3>() + origin;
  double s = 0.0;
  std::size_t hits = 0;
  for (const Vec3& zi : z) {
    const Vec3 x = b.r * zi + t;
    const NdtCell* cell = grid.cell_at(x);
    if (cell == nullptr) {
      s += penalty;
      continue;
    }
    const Vec3 e = x - cell->mean;
    s += cell->log_norm + 0.5 * e.dot(cell->inverse_covariance * e);
    ++hits;
  }
  return {s, z.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(z.size())};
}

Objective evaluate(const NdtGrid& grid, const std::vector<Vec3>& z, const Vec6& p,
                   double penalty, const Vec3& origin = Vec3::Zero()) {
  const AngleBasis b = angle_basis(p[3], p[4], p[5]);
  const Vec3 t = p.head<3>() + origin;
  Objective obj;
  std::size_t hits = 0;
  Eigen::Matrix<double, 3, 6> jac;
  jac.setZero();
  jac.block<3, 3>(0, 0).setIdentity();
  for (const Vec3& zi : z) {
    const Vec3 x = b.r * zi + t;
    const NdtCell* cell = grid.cell_at(x);
    if (cell == nullptr) {
      obj.score += penalty;
      continue;
    }
    ++hits;
    const Vec3 e = x - cell->mean;
    const Mat3& binv = cell->inverse_covariance;
    const Vec3 be = binv * e;
    obj.score += cell->log_norm + 0.5 * e.dot(be);

    jac.col(3) = b.d_roll * zi;
    jac.col(4) = b.d_pitch * zi;
    jac.col(5) = b.d_yaw * zi;
    obj.gradient.noalias() += jac.transpose() * be;
    obj.hessian.noalias() += jac.transpose() * binv * jac;
    // Second-order (curvature of the transform) terms, angle block only.
    obj.hessian(3, 3) += be.dot(b.dd_rr * zi);
    obj.hessian(3, 4) += be.dot(b.dd_rp * zi);
    obj.hessian(3, 5) += be.dot(b.dd_ry * zi);
    obj.hessian(4, 4) += be.dot(b.dd_pp * zi);
    obj.hessian(4, 5) += be.dot(b.dd_py * zi);
    obj.hessian(5, 5) += be.dot(b.dd_yy * zi);
  }
  obj.hessian(4, 3) = obj.hessian(3, 4);
  obj.hessian(5, 3) = obj.hessian(3, 5);
  obj.hessian(5, 4) = obj.hessian(4, 5);
  obj.fitness = z.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(z.size());
  return obj;
}

}  // namespace

double unoccupied_penalty(double cell_size) {
  // -log density at 3 sigma of an isotropic Gaussian with sigma = cell/2.
  const double sigma = 0.5 * cell_size;
  return 1.5 * kLog2Pi + 3.0 * std::log(sigma) + 4.5;
}

std::pair<double, double> score(const NdtGrid& grid, const PointCloud& scan, const Pose& p) {
  if (scan.empty()) throw Error("score: scan is empty");
  std::vector<Vec3> z;
  z.reserve(scan.size());
  const Mat3 r = p.rotation_matrix();
  for (const Vec3& x : scan.points) z.push_back(r * x + p.translation);
  return evaluate_score(grid, z, Vec6::Zero(), unoccupied_penalty(grid.cell_size()));
}

ScoreDerivatives score_derivatives(const NdtGrid& grid, const PointCloud& scan, const Vec6& p) {
  if (scan.empty()) throw Error("score_derivatives: scan is empty");
  const Objective obj = evaluate(grid, scan.points, p, unoccupied_penalty(grid.cell_size()));
  ScoreDerivatives out;
  out.score = obj.score;
  out.fitness = obj.fitness;
  out.gradient = obj.gradient;
  out.hessian = obj.hessian;
  return out;
}

RegistrationResult register_scan(const NdtGrid& grid, const PointCloud& scan, const Pose& init,
                                 const RegistrationParams& params) {
  // Pre-transform by init once; the optimization runs over a correction p
  // starting at zero, rotating about the init position (local lever arms keep
  // the Newton system well conditioned anywhere in the map). Downsampling
  // happens in the init frame so that rigidly remapped scans with a
  // correspondingly remapped init keep the same retained subset.
  PointCloud moved = transform_cloud(init, scan, Frame::map);
  const PointCloud down = voxel_downsample(moved, params.downsample_voxel);
  if (static_cast<int>(down.size()) < params.min_scan_points) {
    throw TooFewPoints("register_scan: " + std::to_string(down.size()) +
                       " points after downsampling, need " +
                       std::to_string(params.min_scan_points));
  }
  const Vec3 center = init.translation;
  std::vector<Vec3> z;
  z.reserve(down.size());
  for (const Vec3& x : down.points) z.push_back(x - center);

  const double penalty = unoccupied_penalty(grid.cell_size());
  Vec6 p = Vec6::Zero();

  RegistrationResult result;
  Objective obj = evaluate(grid, z, p, penalty, center);
  double current_score = obj.score;
  result.fitness = obj.fitness;
  result.hessian = obj.hessian;

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    result.iterations = iter + 1;
    if (!obj.gradient.allFinite() || !obj.hessian.allFinite()) {
      throw DegenerateHessian("register_scan: non-finite derivatives");
    }

    // Levenberg-style diagonal damping until the system factorizes PD.
    Vec6 step = Vec6::Zero();
    double tau = 0.0;
    while (true) {
      Mat6 damped = obj.hessian;
      damped.diagonal().array() += tau;
      Eigen::LLT<Mat6> llt(damped);
      if (llt.info() == Eigen::Success) {
        step = llt.solve(-obj.gradient);
        if (step.allFinite()) break;
      }
      tau = (tau == 0.0) ? params.lm_tau0 : tau * params.lm_factor;
      if (tau > params.lm_tau_max) {
        throw DegenerateHessian("register_scan: Hessian damping exhausted (tau > " +
                                std::to_string(params.lm_tau_max) + ")");
      }
    }

    if (step.norm() < params.step_tolerance) result.converged = true;
    if (step.norm() < params.polish_tolerance) break;

    // Backtracking line search: halve until the score decreases.
    bool accepted = false;
    Vec6 candidate_step = step;
    for (int h = 0; h <= params.max_halvings; ++h) {
      const Vec6 p_new = p + candidate_step;
      const auto [s_new, fit_new] = evaluate_score(grid, z, p_new, penalty, center);
      if (s_new < current_score) {
        p = p_new;
        current_score = s_new;
        accepted = true;
        break;
      }
      candidate_step *= 0.5;
    }
    if (!accepted) {
      // No decrease in any direction: at a plateau or local minimum. The
      // final (fully halved) candidate is the step that was left to try.
      if (candidate_step.norm() < params.step_tolerance) result.converged = true;
      break;
    }

    obj = evaluate(grid, z, p, penalty, center);
    current_score = obj.score;
    result.fitness = obj.fitness;
    result.hessian = obj.hessian;
    if (candidate_step.norm() < params.step_tolerance) result.converged = true;
    if (candidate_step.norm() < params.polish_tolerance) break;
  }

  result.score = current_score;
  // x_world = R(p) (x - center) + t(p) + center with x = init-transformed
  // points, i.e. rotation composed on init, translation offset by t(p).
  const Pose correction = pose_from_xyzrpy(p);
  result.pose.rotation = (correction.rotation * init.rotation).normalized();
  result.pose.translation = init.translation + correction.translation;
  result.pose.stamp = scan.stamp;
  return result;
}

}  // namespace ndtfuse::ndt
