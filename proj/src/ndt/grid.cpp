#include "ndtfuse/ndt/grid.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::ndt {

CellIndex NdtGrid::index_of(const Vec3& p) const {
  const Vec3 q = (p - origin_) / cell_size_;
  return CellIndex{static_cast<std::int32_t>(std::floor(q.x())),
                   static_cast<std::int32_t>(std::floor(q.y())),
                   static_cast<std::int32_t>(std::floor(q.z()))};
}

const NdtCell* NdtGrid::cell_at(const Vec3& p) const {
  const auto it = cells_.find(index_of(p));
  return it == cells_.end() ? nullptr : &it->second;
}

void NdtGrid::insert(const CellIndex& idx, NdtCell cell) {
  cells_[idx] = std::move(cell);
}

NdtGrid NdtGrid::filtered_by_radius(const Vec3& center, double radius) const {
  NdtGrid out(cell_size_, origin_);
  const double r2 = radius * radius;
  for (const auto& [idx, cell] : cells_) {
    if ((cell.mean - center).squaredNorm() <= r2) out.insert(idx, cell);
  }
  return out;
}

Mat3 regularize_covariance(const Mat3& cov, double eig_floor_ratio) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 lambda = eig.eigenvalues();
  // Fully degenerate cells (all points coincident) get a tiny isotropic blob.
  double lambda_max = std::max(lambda.maxCoeff(), 1e-9);
  const double floor = eig_floor_ratio * lambda_max;
  for (int i = 0; i < 3; ++i) lambda[i] = std::clamp(lambda[i], floor, lambda_max);
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

NdtGrid build_grid(const PointCloud& map, double cell_size, const GridParams& params_in) {
  if (map.empty()) throw EmptyMap("build_grid: map cloud is empty");
  if (cell_size <= 0.0) throw Error("build_grid: cell_size must be > 0");

  GridParams params = params_in;
  params.cell_size = cell_size;
  // Voxel origin sits half a cell down so that ground-level surfaces fall
  // inside a voxel instead of on a boundary.
  NdtGrid grid(cell_size, Vec3(0.0, 0.0, -0.5 * cell_size));

  // Accumulation is shifted by the first point seen in each cell so the
  // moment sums stay O(cell_size) regardless of map coordinates.
  struct Accum {
    Vec3 anchor = Vec3::Zero();
    Vec3 sum = Vec3::Zero();
    Mat3 sq_sum = Mat3::Zero();
    int count = 0;
  };
  std::unordered_map<CellIndex, Accum, CellIndexHash> accums;
  accums.reserve(map.size() / 8 + 16);
  for (const Vec3& p : map.points) {
    Accum& a = accums[grid.index_of(p)];
    if (a.count == 0) a.anchor = p;
    const Vec3 d = p - a.anchor;
    a.sum += d;
    a.sq_sum += d * d.transpose();
    a.count += 1;
  }

  constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
  for (auto& [idx, a] : accums) {
    if (a.count < params.min_points_per_cell) continue;
    NdtCell cell;
    cell.count = a.count;
    const Vec3 local_mean = a.sum / a.count;
    cell.mean = a.anchor + local_mean;
    Mat3 cov = a.sq_sum / a.count - local_mean * local_mean.transpose();
    cov = 0.5 * (cov + cov.transpose());
    cell.covariance = regularize_covariance(cov, params.eig_floor_ratio);
    cell.inverse_covariance = cell.covariance.inverse();
    cell.log_norm = 1.5 * kLog2Pi + 0.5 * std::log(cell.covariance.determinant());
    grid.insert(idx, std::move(cell));
  }
  return grid;
}

NdtGrid build_grid(const PointCloud& map, const GridParams& params) {
  return build_grid(map, params.cell_size, params);
}

double cell_pdf(const NdtCell& cell, const Vec3& x) {
  const Vec3 d = x - cell.mean;
  const double maha2 = d.dot(cell.inverse_covariance * d);
  return std::exp(-cell.log_norm - 0.5 * maha2);
}

}  // namespace ndtfuse::ndt
