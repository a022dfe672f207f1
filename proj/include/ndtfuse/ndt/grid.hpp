#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>

#include "ndtfuse/types.hpp"

namespace ndtfuse::ndt {

struct GridParams {
  double cell_size = 1.0;        // m, cubic voxels
  int min_points_per_cell = 6;   // voxels with fewer points are dropped
  double eig_floor_ratio = 0.01; // eigenvalues clamped up to ratio * lambda_max
};

/// Per-voxel Gaussian surface model: sample mean, eigenvalue-regularized
/// covariance and its inverse, and the number of contributing map points.
struct NdtCell {
  Vec3 mean = Vec3::Zero();
  Mat3 covariance = Mat3::Identity();
  Mat3 inverse_covariance = Mat3::Identity();
  int count = 0;
  // -log of the Gaussian normalization constant, cached for scoring.
  double log_norm = 0.0;
};

struct CellIndex {
  std::int32_t x = 0, y = 0, z = 0;
  bool operator==(const CellIndex&) const = default;
};

struct CellIndexHash {
  std::size_t operator()(const CellIndex& c) const {
    std::uint64_t h = static_cast<std::uint32_t>(c.x);
    h = h * 0x9E3779B97F4A7C15ull + static_cast<std::uint32_t>(c.y);
    h = h * 0x9E3779B97F4A7C15ull + static_cast<std::uint32_t>(c.z);
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

/// Sparse voxel map of Gaussians built from a reference point cloud.
class NdtGrid {
 public:
  using CellMap = std::unordered_map<CellIndex, NdtCell, CellIndexHash>;

  NdtGrid() = default;
  NdtGrid(double cell_size, const Vec3& origin) : cell_size_(cell_size), origin_(origin) {}

  double cell_size() const { return cell_size_; }
  const Vec3& origin() const { return origin_; }
  const CellMap& cells() const { return cells_; }
  std::size_t size() const { return cells_.size(); }

  CellIndex index_of(const Vec3& p) const;
  /// Cell containing p, or nullptr if that voxel is unoccupied.
  const NdtCell* cell_at(const Vec3& p) const;
  void insert(const CellIndex& idx, NdtCell cell);

  /// Cells whose mean lies within radius of center (used for submap
  /// restriction around a GNSS fix).
  NdtGrid filtered_by_radius(const Vec3& center, double radius) const;

 private:
  double cell_size_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  CellMap cells_;
};

/// Voxelizes the map and fits a regularized Gaussian per cell. Voxels with
/// fewer than min_points_per_cell points are omitted. Throws EmptyMap.
NdtGrid build_grid(const PointCloud& map, double cell_size, const GridParams& params = {});
NdtGrid build_grid(const PointCloud& map, const GridParams& params);

/// Trivariate Gaussian density of the cell at x.
double cell_pdf(const NdtCell& cell, const Vec3& x);

/// Eigenvalue regularization used by build_grid: eigenvalues smaller than
/// ratio * lambda_max are raised to that floor and the matrix is recomposed.
Mat3 regularize_covariance(const Mat3& cov, double eig_floor_ratio);

}  // namespace ndtfuse::ndt
