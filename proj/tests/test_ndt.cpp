#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"
#include "ndtfuse/ndt/grid.hpp"
#include "ndtfuse/ndt/registration.hpp"
#include "oracles.hpp"
#include "scene.hpp"

using namespace ndtfuse;
using namespace ndtfuse::ndt;

TEST_CASE("build_grid computes the documented mean and regularized covariance") {
  PointCloud map;
  map.points = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(1, 0, 0),
                Vec3(1, 0, 0), Vec3(1, 0, 0), Vec3(1, 0, 0)};
  const NdtGrid grid = build_grid(map, 4.0);
  REQUIRE(grid.size() == 1);
  const NdtCell& cell = grid.cells().begin()->second;
  CHECK(cell.count == 6);
  CHECK((cell.mean - Vec3(1, 0, 0)).norm() < 1e-15);
  // Raw Sxx = 1/3; the flat directions are floored at 1% of the largest
  // eigenvalue.
  CHECK(cell.covariance(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(cell.covariance(1, 1) == doctest::Approx(0.01 / 3.0).epsilon(1e-9));
  CHECK(cell.covariance(2, 2) == doctest::Approx(0.01 / 3.0).epsilon(1e-9));
}

TEST_CASE("build_grid omits voxels below the point threshold") {
  PointCloud map;
  for (int i = 0; i < 5; ++i) map.points.emplace_back(0.1 * i, 0.0, 0.0);
  map.points.emplace_back(10.5, 10.5, 0.0);  // lone far point, also below threshold
  const NdtGrid grid = build_grid(map, 4.0);
  CHECK(grid.size() == 0);
}

TEST_CASE("build_grid throws on an empty map") {
  CHECK_THROWS_AS((void)build_grid(PointCloud{}, 1.0), EmptyMap);
}

TEST_CASE("build_grid matches the two-pass oracle on random voxels") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> center_u(-100.0, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    // One voxel: unit xy extents on integer boundaries, z centered on the
    // half-shifted vertical origin.
    const Vec3 base(std::floor(center_u(rng)), std::floor(center_u(rng)),
                    std::floor(center_u(rng)) + 0.5);
    PointCloud map;
    for (int i = 0; i < 100; ++i)
      map.points.push_back(base + Vec3(u(rng), u(rng), 0.01 + 0.98 * u(rng)));
    const NdtGrid grid = build_grid(map, 1.0);
    REQUIRE(grid.size() == 1);
    const NdtCell& cell = grid.cells().begin()->second;
    const auto [mean, cov] = oracles::two_pass_mean_cov(map.points);
    CHECK((cell.mean - mean).cwiseAbs().maxCoeff() < 1e-12);
    // Compare against the regularized oracle covariance.
    const Mat3 reg = regularize_covariance(cov, 0.01);
    CHECK((cell.covariance - reg).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("grid covariances stay positive definite with bounded conditioning") {
  const NdtGrid grid = build_grid(test_scene::street_scene(), 1.0);
  REQUIRE(grid.size() > 100);
  for (const auto& [idx, cell] : grid.cells()) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cell.covariance);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    CHECK(lmin > 0.0);
    CHECK(lmin >= 0.01 * lmax * (1.0 - 1e-9));
    CHECK((cell.covariance - cell.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

namespace {

NdtCell make_cell(const Vec3& mean, const Mat3& cov) {
  NdtCell cell;
  cell.mean = mean;
  cell.covariance = cov;
  cell.inverse_covariance = cov.inverse();
  cell.log_norm = 1.5 * std::log(2.0 * kPi) + 0.5 * std::log(cov.determinant());
  cell.count = 6;
  return cell;
}

}  // namespace

TEST_CASE("cell_pdf standard normal mode and unit Mahalanobis offset") {
  const NdtCell cell = make_cell(Vec3::Zero(), Mat3::Identity());
  const double mode = cell_pdf(cell, Vec3::Zero());
  CHECK(mode == doctest::Approx(std::pow(2.0 * kPi, -1.5)).epsilon(1e-12));
  CHECK(cell_pdf(cell, Vec3(1, 0, 0)) == doctest::Approx(mode * std::exp(-0.5)).epsilon(1e-12));
}

TEST_CASE("cell_pdf matches the dense linear-algebra oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Mat3 a;
    a << u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng);
    const Mat3 cov = a * a.transpose() + 0.05 * Mat3::Identity();
    const Vec3 mean(u(rng) * 10, u(rng) * 10, u(rng) * 10);
    const NdtCell cell = make_cell(mean, cov);
    const Vec3 x = mean + Vec3(u(rng), u(rng), u(rng));
    const double expected = oracles::gaussian_density(mean, cov, x);
    CHECK(cell_pdf(cell, x) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("score at cell means and off the grid") {
  const PointCloud map = test_scene::street_scene();
  const NdtGrid grid = build_grid(map, 1.0);

  PointCloud at_means;
  at_means.frame = Frame::lidar;
  double expected = 0.0;
  int n = 0;
  for (const auto& [idx, cell] : grid.cells()) {
    at_means.points.push_back(cell.mean);
    expected += cell.log_norm;  // -log of the mode density
    if (++n == 50) break;
  }
  const auto [s, fitness] = score(grid, at_means, Pose::identity());
  CHECK(fitness == 1.0);
  CHECK(s == doctest::Approx(expected).epsilon(1e-12));

  PointCloud outside;
  outside.points = {Vec3(500, 500, 0), Vec3(510, 500, 3)};
  const auto [s_out, fit_out] = score(grid, outside, Pose::identity());
  CHECK(fit_out == 0.0);
  CHECK(s_out == doctest::Approx(2.0 * unoccupied_penalty(1.0)).epsilon(1e-12));
}

TEST_CASE("score matches a per-point oracle") {
  const NdtGrid grid = build_grid(test_scene::street_scene(), 1.0);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud scan;
  for (int i = 0; i < 500; ++i)
    scan.points.emplace_back(u(rng) * 25.0, u(rng) * 18.0, u(rng) * 3.0 + 1.5);
  const Pose pose = pose_from_xyzrpy((Vec6() << 0.4, -0.2, 0.05, 0.01, -0.02, 0.3).finished());

  double expected = 0.0;
  int hits = 0;
  for (const Vec3& x : scan.points) {
    const Vec3 moved = pose.apply(x);
    const NdtCell* cell = grid.cell_at(moved);
    if (cell == nullptr) {
      expected += unoccupied_penalty(grid.cell_size());
    } else {
      expected += -std::log(oracles::gaussian_density(cell->mean, cell->covariance, moved));
      ++hits;
    }
  }
  const auto [s, fitness] = score(grid, scan, pose);
  CHECK(s == doctest::Approx(expected).epsilon(1e-9));
  CHECK(fitness == doctest::Approx(static_cast<double>(hits) / scan.size()));
}

TEST_CASE("analytic score gradient matches central finite differences") {
  const NdtGrid grid = build_grid(test_scene::street_scene(), 1.0);
  PointCloud scan = voxel_downsample(test_scene::street_scene(), 0.9);
  scan.points.resize(400);

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec6 p;
    p << 0.3 * u(rng), 0.3 * u(rng), 0.1 * u(rng), 0.02 * u(rng), 0.02 * u(rng), 0.1 * u(rng);
    const ScoreDerivatives d = score_derivatives(grid, scan, p);
    const auto f = [&](const Eigen::VectorXd& v) {
      return score(grid, scan, pose_from_xyzrpy(Vec6(v))).first;
    };
    const Eigen::VectorXd fd = oracles::central_differences(f, p, 1e-6);
    const double rel = (d.gradient - Vec6(fd)).norm() / std::max(1.0, Vec6(fd).norm());
    CHECK(rel < 1e-5);
  }
}

namespace {

// Scan sampled from the scene, expressed in the body frame of `truth`.
PointCloud make_scan(const PointCloud& map, const Pose& truth, int stride) {
  PointCloud scan;
  scan.frame = Frame::lidar;
  const Pose t_inv = inverse(truth);
  for (std::size_t i = 0; i < map.size(); i += stride) scan.points.push_back(t_inv.apply(map.points[i]));
  return scan;
}

}  // namespace

TEST_CASE("register_scan is a no-op from the true pose") {
  const PointCloud map = test_scene::street_scene();
  const NdtGrid grid = build_grid(map, 1.0);
  const Pose truth = pose_from_xyzrpy((Vec6() << 1.0, -2.0, 0.0, 0, 0, 0.4).finished());

  // Scan sampled exactly at the cell means, expressed in the body frame.
  PointCloud scan;
  scan.frame = Frame::lidar;
  const Pose t_inv = inverse(truth);
  for (const auto& [idx, cell] : grid.cells()) scan.points.push_back(t_inv.apply(cell.mean));

  const RegistrationResult res = register_scan(grid, scan, truth);
  CHECK(res.converged);
  CHECK(res.iterations <= 2);
  CHECK((res.pose.translation - truth.translation).norm() < 1e-6);
  CHECK(res.pose.rotation.angularDistance(truth.rotation) < 1e-6);
}

TEST_CASE("register_scan recovers a known offset") {
  const PointCloud map = test_scene::street_scene();
  const NdtGrid grid = build_grid(map, 1.0);
  const Pose truth = pose_from_xyzrpy((Vec6() << 0.3, -0.2, 0.0, 0, 0, deg2rad(5.0)).finished());
  const PointCloud scan = make_scan(map, truth, 3);

  const RegistrationResult res = register_scan(grid, scan, Pose::identity());
  CHECK(res.converged);
  CHECK((res.pose.translation - truth.translation).norm() < 0.01);
  CHECK(rad2deg(res.pose.rotation.angularDistance(truth.rotation)) < 0.1);
  CHECK(res.fitness > 0.9);

  // Monotone line search: the result never scores worse than the init.
  const double s_init = score(grid, scan, Pose::identity()).first;
  CHECK(res.score <= s_init);
}

TEST_CASE("register_scan reports failure on disjoint regions") {
  const PointCloud map = test_scene::street_scene();
  const NdtGrid grid = build_grid(map, 1.0);
  Pose far_away;
  far_away.translation = Vec3(500, 500, 0);
  const PointCloud scan = make_scan(map, Pose::identity(), 3);
  const RegistrationResult res = register_scan(grid, scan, far_away);
  CHECK((!res.converged || res.fitness < 0.2));
}

TEST_CASE("register_scan rejects scans that downsample too small") {
  const NdtGrid grid = build_grid(test_scene::street_scene(), 1.0);
  PointCloud tiny;
  for (int i = 0; i < 60; ++i) tiny.points.emplace_back(0.001 * i, 0.0, 0.0);  // one voxel
  CHECK_THROWS_AS((void)register_scan(grid, tiny, Pose::identity()), TooFewPoints);
}

TEST_CASE("register_scan is equivariant under a rigid remap of the scan") {
  const PointCloud map = test_scene::street_scene();
  const NdtGrid grid = build_grid(map, 1.0);
  const Pose truth = pose_from_xyzrpy((Vec6() << 0.2, 0.1, 0.0, 0, 0, deg2rad(3.0)).finished());
  const PointCloud scan = make_scan(map, truth, 4);

  const Pose q = pose_from_xyzrpy((Vec6() << 2.0, -1.0, 0.3, 0.05, -0.02, 0.7).finished());
  const PointCloud scan_q = transform_cloud(q, scan, scan.frame);

  const RegistrationResult base = register_scan(grid, scan, Pose::identity());
  const RegistrationResult remapped = register_scan(grid, scan_q, compose(Pose::identity(), inverse(q)));
  const Pose expected = compose(base.pose, inverse(q));
  CHECK((remapped.pose.translation - expected.translation).norm() < 1e-4);
  CHECK(remapped.pose.rotation.angularDistance(expected.rotation) < 1e-4);
}
