#pragma once

#include "ndtfuse/ndt/grid.hpp"
#include "ndtfuse/types.hpp"

namespace ndtfuse::ndt {

struct RegistrationParams {
  int max_iterations = 30;
  double step_tolerance = 1e-4;    // mixed m/rad norm; defines `converged`
  double polish_tolerance = 1e-6;  // keep refining below step_tolerance
  int max_halvings = 10;           // backtracking line search
  double downsample_voxel = 0.5;   // m, keep-first filter applied to the scan
  int min_scan_points = 50;        // after downsampling
  double lm_tau0 = 1e-6;           // Levenberg damping start
  double lm_factor = 10.0;
  double lm_tau_max = 1e12;
};

struct RegistrationResult {
  Pose pose;             // scan -> map
  double score = 0.0;    // negative log-likelihood, lower is better
  double fitness = 0.0;  // fraction of scan points in occupied cells
  int iterations = 0;
  bool converged = false;
  Mat6 hessian = Mat6::Identity();  // final objective Hessian, (t, rpy) order
};

/// Negative log-likelihood of the scan under the grid at pose p, plus the
/// fraction of transformed points that land in occupied cells. Points in
/// unoccupied voxels contribute a fixed penalty (the density three sigma out
/// in an isotropic half-cell-sized Gaussian), keeping the objective bounded.
std::pair<double, double> score(const NdtGrid& grid, const PointCloud& scan, const Pose& p);

double unoccupied_penalty(double cell_size);

/// Score plus its analytic gradient and Hessian with respect to the
/// (tx, ty, tz, roll, pitch, yaw) parametrization, evaluated at p.
struct ScoreDerivatives {
  double score = 0.0;
  double fitness = 0.0;
  Vec6 gradient = Vec6::Zero();
  Mat6 hessian = Mat6::Zero();
};

ScoreDerivatives score_derivatives(const NdtGrid& grid, const PointCloud& scan, const Vec6& p);

/// Newton minimization of the negative log-likelihood over a local
/// (tx, ty, tz, roll, pitch, yaw) correction applied on top of init.
/// Returns converged=false with the best-so-far pose when the iteration
/// budget runs out; throws DegenerateHessian when damping cannot produce a
/// usable step and TooFewPoints when the downsampled scan is too small.
RegistrationResult register_scan(const NdtGrid& grid, const PointCloud& scan, const Pose& init,
                                 const RegistrationParams& params = {});

}  // namespace ndtfuse::ndt
