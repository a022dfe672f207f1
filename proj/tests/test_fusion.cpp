#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/fusion/methods.hpp"
#include "ndtfuse/fusion/ukf.hpp"
#include "ndtfuse/geodesy.hpp"
#include "ndtfuse/geometry.hpp"
#include "ndtfuse/ndt/grid.hpp"
#include "oracles.hpp"

using namespace ndtfuse;
using namespace ndtfuse::fusion;

namespace {

UkfParams quiet_params() {
  UkfParams p;
  p.sigma_accel = 1e-8;
  p.sigma_gyro = 1e-8;
  p.sigma_pos_floor = 1e-8;
  p.sigma_gyro_bias_rw = 1e-10;
  p.sigma_accel_bias_rw = 1e-10;
  return p;
}

FilterState linear_start() {
  FilterState f;
  // Orientation and bias uncertainty pinned to zero keeps the propagation
  // exactly linear in (p, v).
  Eigen::Matrix<double, 15, 1> d;
  d.setZero();
  d.segment<3>(0).setConstant(0.04);
  d.segment<3>(3).setConstant(0.01);
  f.covariance = d.asDiagonal();
  return f;
}

ImuSample gravity_cancelling(double stamp = 0.0) {
  ImuSample s;
  s.stamp = stamp;
  s.linear_acceleration = Vec3(0, 0, 9.81);
  return s;
}

}  // namespace

TEST_CASE("ukf_predict force-free motion advances position exactly") {
  FilterState f = linear_start();
  f.velocity = Vec3(1, 0, 0);
  const FilterState out = ukf_predict(f, gravity_cancelling(), 0.01, quiet_params());
  CHECK((out.position - Vec3(0.01, 0, 0)).norm() < 1e-12);
  CHECK(out.orientation.angularDistance(Quat::Identity()) < 1e-12);
  CHECK((out.velocity - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("ukf_predict constant forward accel integrates to the closed form") {
  FilterState f = linear_start();
  ImuSample s = gravity_cancelling();
  s.linear_acceleration.x() = 1.0;
  for (int k = 0; k < 100; ++k) f = ukf_predict(f, s, 0.01, quiet_params());
  CHECK(std::abs(f.position.x() - 0.5) < 1e-6);
  CHECK(std::abs(f.velocity.x() - 1.0) < 1e-9);
}

TEST_CASE("ukf_predict rejects bad dt") {
  FilterState f;
  CHECK_THROWS_AS((void)ukf_predict(f, gravity_cancelling(), 0.0), NonPositiveDt);
  CHECK_THROWS_AS((void)ukf_predict(f, gravity_cancelling(), -0.01), NonPositiveDt);
  CHECK_THROWS_AS((void)ukf_predict(f, gravity_cancelling(), 0.5), NonPositiveDt);
}

TEST_CASE("process noise strictly grows the covariance trace") {
  FilterState f;
  UkfParams p;  // default positive noise
  const FilterState out = ukf_predict(f, gravity_cancelling(), 0.01, p);
  CHECK(out.covariance.trace() > f.covariance.trace());
}

TEST_CASE("zero-innovation update keeps the mean and shrinks the trace") {
  FilterState f;
  f.position = Vec3(3, -2, 1);
  const FilterState out =
      ukf_update_position(f, f.position, 0.25 * Mat3::Identity());
  CHECK((out.position - f.position).norm() < 1e-10);
  CHECK((out.velocity - f.velocity).norm() < 1e-10);
  CHECK(out.covariance.trace() < f.covariance.trace());
}

TEST_CASE("uninformative measurement leaves the state unchanged") {
  FilterState f;
  f.position = Vec3(3, -2, 1);
  const FilterState out =
      ukf_update_position(f, f.position + Vec3(5, 5, 5), 1e12 * Mat3::Identity());
  CHECK((out.position - f.position).norm() < 1e-6);
}

TEST_CASE("ukf means match a linear Kalman filter oracle") {
  FilterState f = linear_start();
  oracles::LinearKf kf;
  kf.cov.setZero();
  kf.cov.topLeftCorner<3, 3>() = 0.04 * Mat3::Identity();
  kf.cov.bottomRightCorner<3, 3>() = 0.01 * Mat3::Identity();

  UkfParams p = quiet_params();
  p.sigma_accel = 0.05;
  p.sigma_pos_floor = 1e-4;
  const double dt = 0.01;

  Eigen::Matrix<double, 6, 6> q = Eigen::Matrix<double, 6, 6>::Zero();
  q.topLeftCorner<3, 3>() = std::pow(p.sigma_pos_floor * dt, 2) * Mat3::Identity();
  q.bottomRightCorner<3, 3>() = std::pow(p.sigma_accel * dt, 2) * Mat3::Identity();

  std::mt19937_64 rng(123);
  std::normal_distribution<double> n(0.0, 1.0);
  const Mat3 r = 0.09 * Mat3::Identity();

  for (int k = 0; k < 500; ++k) {
    ImuSample s = gravity_cancelling();
    s.linear_acceleration.x() = 0.3;
    f = ukf_predict(f, s, dt, p);
    kf.predict(Vec3(0.3, 0, 0), dt, q);
    if (k % 10 == 0) {
      const Vec3 z = kf.mean.head<3>() + 0.3 * Vec3(n(rng), n(rng), n(rng));
      f = ukf_update_position(f, z, r, p);
      kf.update(z, r);
    }
    CHECK((f.position - kf.mean.head<3>()).norm() < 1e-9);
    CHECK((f.velocity - kf.mean.tail<3>()).norm() < 1e-9);
  }
}

TEST_CASE("covariance stays PSD through random predict/update interleavings") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FilterState f;
  UkfParams p;
  for (int k = 0; k < 300; ++k) {
    const int action = static_cast<int>(rng() % 4);
    if (action == 0 || k % 2 == 0) {
      ImuSample s;
      s.angular_velocity = Vec3(u(rng), u(rng), u(rng)) * 0.3;
      s.linear_acceleration = Vec3(u(rng), u(rng), 9.81 + u(rng));
      f = ukf_predict(f, s, 0.01 + 0.04 * std::abs(u(rng)), p);
    } else if (action == 1) {
      f = ukf_update_position(f, f.position + Vec3(u(rng), u(rng), u(rng)),
                              0.09 * Mat3::Identity(), p);
    } else if (action == 2) {
      Pose z = f.pose();
      z.translation += Vec3(u(rng), u(rng), u(rng)) * 0.2;
      z.rotation = (z.rotation * quat_exp(Vec3(u(rng), u(rng), u(rng)) * 0.02)).normalized();
      Mat6 r = Mat6::Identity() * 0.01;
      f = ukf_update_pose(f, z, r, p);
    } else {
      f = ukf_update_speed(f, u(rng), 0.01, p);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 15, 15>> eig(f.covariance);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-9);
    CHECK((f.covariance - f.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("detect_jump thresholds and symmetry") {
  MethodConfig cfg;
  Pose a = Pose::identity();

  CHECK(!detect_jump(a, a, cfg));

  Pose far = a;
  far.translation = Vec3(5, 0, 0);
  CHECK(detect_jump(a, far, cfg));
  CHECK(detect_jump(far, a, cfg));

  Pose near = pose_from_xyzrpy((Vec6() << 1.9, 0, 0, 0, 0, deg2rad(9.0)).finished());
  CHECK(!detect_jump(a, near, cfg));
  CHECK(!detect_jump(near, a, cfg));

  Pose turned = pose_from_xyzrpy((Vec6() << 0, 0, 0, 0, 0, deg2rad(11.0)).finished());
  CHECK(detect_jump(a, turned, cfg));
}

TEST_CASE("estimate_gnss_bias windowed mean") {
  std::vector<Vec3> residuals;
  for (int k = 0; k < 700; ++k) residuals.emplace_back(0.2 * k, -0.46, 0.0);
  const Eigen::Vector2d bias = estimate_gnss_bias(residuals, 60.0);
  CHECK(bias.x() == doctest::Approx(-0.46).epsilon(1e-12));
  CHECK(bias.y() == doctest::Approx(0.0).epsilon(1e-12));

  SUBCASE("zero-mean noise averages out") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<Vec3> noisy;
    for (int k = 0; k < 1500; ++k) noisy.emplace_back(0.2 * k, n(rng), n(rng));
    const Eigen::Vector2d b = estimate_gnss_bias(noisy, 200.0);
    const double gate = 3.0 * 0.3 / std::sqrt(1000.0);
    CHECK(std::abs(b.x()) < gate);
    CHECK(std::abs(b.y()) < gate);
  }

  SUBCASE("step change converges within one window") {
    std::vector<Vec3> stepped;
    for (int k = 0; k < 600; ++k) stepped.emplace_back(0.2 * k, k < 300 ? 0.1 : 0.5, 0.0);
    // Window entirely inside the post-step regime.
    const Eigen::Vector2d b = estimate_gnss_bias(stepped, 59.0);
    CHECK(b.x() == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("insufficient span") {
    std::vector<Vec3> small;
    for (int k = 0; k < 10; ++k) small.emplace_back(0.2 * k, 0.0, 0.0);
    CHECK_THROWS_AS((void)estimate_gnss_bias(small, 60.0), InsufficientData);
  }
}

namespace {

// A 40 s run on the feature-rich east edge of the standard world.
struct Fixture {
  sim::World world = sim::generate_world(2, {320, 320});
  sim::TrajectorySpec traj;
  Fixture() {
    traj = sim::default_loop_trajectory(world, 800.0);
    // Rotate the corner order so the run starts mid-way along the east edge.
    std::vector<Eigen::Vector2d> w(world.ring_corners.begin(), world.ring_corners.end());
    std::rotate(w.begin(), w.begin() + 1, w.end());
    w.push_back(w.front());
    traj.waypoints = w;
    traj.duration = 40.0;
    traj.speed = 1.2;
  }
};

}  // namespace

TEST_CASE("run_method GNSS reproduces the injected bias") {
  Fixture fx;
  fx.traj.duration = 80.0;
  sim::NoiseSpec noise;
  noise.gnss_sigma = 0.3;
  noise.gnss_bias = {-0.46, 0.0};
  noise.seed = 3;
  const sim::Dataset data = synthesize_dataset(fx.world, fx.traj, noise);

  MethodConfig cfg;
  cfg.method = Method::GNSS;
  const auto outputs = run_method(data, nullptr, cfg);
  REQUIRE(outputs.size() == data.gnss.size());

  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const Vec3 err = outputs[k].pose.translation - data.truth[k * 20].translation;
    mean += Eigen::Vector2d(err.x(), err.y());
  }
  mean /= static_cast<double>(outputs.size());
  CHECK(std::abs(mean.x() + 0.46) < 0.05);
  CHECK(std::abs(mean.y()) < 0.05);

  // Stamps strictly increasing.
  for (std::size_t k = 1; k < outputs.size(); ++k) {
    CHECK(outputs[k].pose.stamp > outputs[k - 1].pose.stamp);
  }
}

TEST_CASE("run_method IMU matches dead reckoning until re-anchor") {
  Fixture fx;
  const sim::Dataset data = synthesize_dataset(fx.world, fx.traj, sim::NoiseSpec{});

  MethodConfig cfg;
  cfg.method = Method::IMU;
  cfg.gnss_heading_sigma_deg = 1e-6;
  cfg.init_attitude_sigma = 1e-8;
  cfg.init_velocity_sigma = 1e-6;
  cfg.init_gyro_bias_sigma = 1e-9;
  cfg.init_accel_bias_sigma = 1e-9;
  cfg.ukf = quiet_params();
  const auto outputs = run_method(data, nullptr, cfg);
  REQUIRE(outputs.size() == data.imu.size() - 1);

  // Oracle: plain strapdown integration from the same anchor.
  Vec3 p = data.truth.front().translation;
  Quat q = data.truth.front().rotation;
  const double yaw = yaw_of(data.truth.front());
  Vec3 v = data.wheel.front().speed * Vec3(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 g(0, 0, -9.81);
  double max_err = 0.0;
  for (std::size_t k = 1; k < data.imu.size(); ++k) {
    const ImuSample& s = data.imu[k];
    const double dt = 0.01;
    const Vec3 a_world = q * s.linear_acceleration + g;
    p += v * dt + 0.5 * a_world * dt * dt;
    v += a_world * dt;
    q = (q * quat_exp(s.angular_velocity * dt)).normalized();
    max_err = std::max(max_err, (outputs[k - 1].pose.translation - p).norm());
  }
  CHECK(max_err < 1e-6);
}

TEST_CASE("run_method NDT++ tracks ground truth on a noise-free run") {
  Fixture fx;
  const sim::Dataset data = synthesize_dataset(fx.world, fx.traj, sim::NoiseSpec{});
  sim::SurveyParams survey;
  const PointCloud map_cloud = sim::build_survey_map(fx.world, fx.traj, survey);
  const ndt::NdtGrid grid = ndt::build_grid(map_cloud, 1.0);

  MethodConfig cfg;
  cfg.method = Method::NDT_PLUS_PLUS;
  const auto outputs = run_method(data, &grid, cfg);
  REQUIRE(!outputs.empty());

  double sq_x = 0.0, sq_y = 0.0;
  std::size_t n = 0;
  for (const auto& o : outputs) {
    const std::size_t k = static_cast<std::size_t>(std::llround(o.pose.stamp * 100.0));
    if (k >= data.truth.size()) continue;
    const Vec3 err = o.pose.translation - data.truth[k].translation;
    sq_x += err.x() * err.x();
    sq_y += err.y() * err.y();
    ++n;
  }
  CHECK(std::sqrt(sq_x / n) < 0.05);
  CHECK(std::sqrt(sq_y / n) < 0.05);
}

TEST_CASE("run_method requires a map for NDT methods") {
  Fixture fx;
  fx.traj.duration = 2.0;
  const sim::Dataset data = synthesize_dataset(fx.world, fx.traj, sim::NoiseSpec{});
  MethodConfig cfg;
  cfg.method = Method::NDT_PLUS_PLUS;
  CHECK_THROWS_AS((void)run_method(data, nullptr, cfg), MapRequired);
  cfg.method = Method::NDT_PLUS;
  CHECK_THROWS_AS((void)run_method(data, nullptr, cfg), MapRequired);
}

TEST_CASE("run_method rejects empty streams") {
  sim::Dataset empty;
  MethodConfig cfg;
  cfg.method = Method::GNSS;
  CHECK_THROWS_AS((void)run_method(empty, nullptr, cfg), StreamEmpty);
}

TEST_CASE("IMU method re-anchors to GNSS when stationary") {
  // Hand-built stationary dataset: the robot sits still while GNSS insists
  // it is one meter away; after the stationary window the filter follows.
  sim::Dataset data;
  data.reference.latitude = 31.0;
  data.reference.longitude = 121.0;
  data.duration = 20.0;
  for (int k = 0; k < 2000; ++k) {
    ImuSample s;
    s.stamp = 0.01 * k;
    s.linear_acceleration = Vec3(0, 0, 9.81);
    data.imu.push_back(s);
    data.wheel.push_back(WheelSample{0.01 * k, 0.0});
    data.truth.push_back(Pose::identity(0.01 * k));
  }
  for (int k = 0; k < 100; ++k) {
    GnssSample s = enu_to_wgs84(Vec3(1.0, 0.0, 0.0), data.reference, 0.2 * k);
    s.heading = 90.0;  // facing east
    s.horizontal_accuracy = 0.05;
    data.gnss.push_back(s);
  }

  MethodConfig cfg;
  cfg.method = Method::IMU;
  const auto outputs = run_method(data, nullptr, cfg);
  REQUIRE(!outputs.empty());
  // The filter starts at the (biased) first fix and stays anchored there.
  CHECK((outputs.back().pose.translation - Vec3(1, 0, 0)).norm() < 0.2);
}
