#include "ndtfuse/sim/world.hpp"

#include <cmath>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"
#include "ndtfuse/sim/rng.hpp"

namespace ndtfuse::sim {

namespace {

using Eigen::Vector2d;

constexpr std::uint64_t kWorldStream = 0x11;

Vector2d left_normal(const Vector2d& u) { return Vector2d(-u.y(), u.x()); }

// Keeps a face coordinate at least 0.1 m away from the grid planes at
// k + phase; perfectly planar zero-noise surfaces must not straddle voxel
// boundaries of the default 1 m analysis grid.
double snap_off_grid(double v, double phase) {
  const double f = v - phase - std::floor(v - phase);
  if (f < 0.1) return v + (0.1 - f);
  if (f > 0.9) return v - (f - 0.9);
  return v;
}

Box snap_box(Box b) {
  for (int axis = 0; axis < 2; ++axis) {
    b.min[axis] = snap_off_grid(b.min[axis], 0.0);
    b.max[axis] = snap_off_grid(b.max[axis], 0.0);
  }
  b.max.z() = snap_off_grid(b.max.z(), 0.5);
  return b;
}

struct EdgeFrame {
  Vector2d origin;   // corner the edge starts at
  Vector2d dir;      // unit, along the edge
  Vector2d outward;  // unit, away from the ring interior
  double length;
};

Box make_edge_building(const EdgeFrame& e, double s0, double s1, double lat0, double lat1,
                       double height, bool outer) {
  const double side = outer ? 1.0 : -1.0;
  const Vector2d p0 = e.origin + e.dir * s0 + e.outward * (side * lat0);
  const Vector2d p1 = e.origin + e.dir * s1 + e.outward * (side * lat1);
  Box b;
  b.min = Vec3(std::min(p0.x(), p1.x()), std::min(p0.y(), p1.y()), 0.0);
  b.max = Vec3(std::max(p0.x(), p1.x()), std::max(p0.y(), p1.y()), height);
  return snap_box(b);
}

void fill_interval(std::vector<Box>& out, StreamRng& rng, const EdgeFrame& e, double sa, double sb,
                   double setback, bool outer) {
  double cursor = sa;
  while (cursor + 10.0 < sb) {
    const double len = rng.uniform(14.0, 32.0);
    const double gap = rng.uniform(4.0, 12.0);
    const double depth = rng.uniform(8.0, 20.0);
    const double height = rng.uniform(6.0, 14.0);
    const double end = std::min(cursor + len, sb);
    out.push_back(make_edge_building(e, cursor, end, setback, setback + depth, height, outer));
    cursor = end + gap;
  }
}

}  // namespace

World generate_world(std::uint64_t seed, const Vector2d& bounds, const WorldParams& params) {
  if (bounds.x() < 100.0 || bounds.y() < 100.0) {
    throw Error("generate_world: bounds must be at least 100 x 100 m");
  }

  World world;
  world.bounds_min = Vector2d::Zero();
  world.bounds_max = bounds;

  const double m = params.ring_margin;
  const Vector2d c0(m, m), c1(bounds.x() - m, m), c2(bounds.x() - m, bounds.y() - m),
      c3(m, bounds.y() - m);
  world.ring_corners = {c0, c1, c2, c3};

  const EdgeFrame south{c0, Vector2d(1, 0), Vector2d(0, -1), (c1 - c0).norm()};
  const EdgeFrame east{c1, Vector2d(0, 1), Vector2d(1, 0), (c2 - c1).norm()};
  const EdgeFrame north{c2, Vector2d(-1, 0), Vector2d(0, 1), (c3 - c2).norm()};
  const EdgeFrame west{c3, Vector2d(0, -1), Vector2d(-1, 0), (c0 - c3).norm()};

  StreamRng rng(seed, kWorldStream);
  const double hw = params.street_half_width;
  const double clear = params.corner_clearance;

  // South edge: a long continuous building on each side forms the canyon.
  {
    const double usable = south.length - 2.0 * clear;
    const double canyon = std::min(params.canyon_length, usable - 4.0);
    const double sa = clear + 0.5 * (usable - canyon);
    const double sb = sa + canyon;
    world.buildings.push_back(
        make_edge_building(south, sa, sb, hw, hw + rng.uniform(10.0, 16.0), rng.uniform(8.0, 12.0), true));
    world.buildings.push_back(
        make_edge_building(south, sa, sb, hw, hw + rng.uniform(10.0, 16.0), rng.uniform(8.0, 12.0), false));
    fill_interval(world.buildings, rng, south, clear, sa - 4.0, hw, true);
    fill_interval(world.buildings, rng, south, clear, sa - 4.0, hw, false);
    fill_interval(world.buildings, rng, south, sb + 4.0, south.length - clear, hw, true);
    fill_interval(world.buildings, rng, south, sb + 4.0, south.length - clear, hw, false);
  }

  for (const EdgeFrame& e : {east, north, west}) {
    fill_interval(world.buildings, rng, e, clear, e.length - clear, hw, true);
    fill_interval(world.buildings, rng, e, clear, e.length - clear, hw, false);
  }

  // Interior filler blocks.
  const double lo_x = m + hw + 12.0, hi_x = bounds.x() - m - hw - 12.0;
  const double lo_y = m + hw + 12.0, hi_y = bounds.y() - m - hw - 12.0;
  for (int i = 0; i < params.filler_blocks && hi_x - lo_x > 50.0 && hi_y - lo_y > 50.0; ++i) {
    const double w = rng.uniform(18.0, 36.0);
    const double h = rng.uniform(18.0, 36.0);
    const double x = rng.uniform(lo_x, hi_x - w);
    const double y = rng.uniform(lo_y, hi_y - h);
    Box b;
    b.min = Vec3(x, y, 0.0);
    b.max = Vec3(x + w, y + h, rng.uniform(8.0, 16.0));
    world.buildings.push_back(snap_box(b));
  }

  return world;
}

TrajectorySpec default_loop_trajectory(const World& world, double duration) {
  TrajectorySpec spec;
  spec.duration = duration;
  spec.waypoints.assign(world.ring_corners.begin(), world.ring_corners.end());
  spec.waypoints.push_back(world.ring_corners.front());
  return spec;
}

Trajectory::Trajectory(const TrajectorySpec& spec) : spec_(spec) {
  if (spec.waypoints.size() < 4) throw Error("trajectory needs at least 3 distinct waypoints");
  if ((spec.waypoints.front() - spec.waypoints.back()).norm() > 1e-9) {
    throw Error("trajectory must be a closed loop (first waypoint == last)");
  }
  std::vector<Eigen::Vector2d> pts(spec.waypoints.begin(), spec.waypoints.end() - 1);
  const int n = static_cast<int>(pts.size());
  const double r = spec.turn_radius;

  struct Corner {
    Eigen::Vector2d entry, exit, center;
    double phi0, sweep;
  };
  std::vector<Corner> corners(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d& prev = pts[(i + n - 1) % n];
    const Eigen::Vector2d& cur = pts[i];
    const Eigen::Vector2d& next = pts[(i + 1) % n];
    const Eigen::Vector2d u = (cur - prev).normalized();
    const Eigen::Vector2d v = (next - cur).normalized();
    const double cross = u.x() * v.y() - u.y() * v.x();
    const double theta = std::atan2(cross, u.dot(v));
    const double d = r * std::tan(std::abs(theta) / 2.0);
    const double sign = theta >= 0 ? 1.0 : -1.0;
    Corner c;
    c.entry = cur - u * d;
    c.exit = cur + v * d;
    c.center = c.entry + sign * r * left_normal(u);
    c.phi0 = std::atan2(c.entry.y() - c.center.y(), c.entry.x() - c.center.x());
    c.sweep = theta;
    corners[i] = c;
  }

  // The path starts mid-way along the first straight (exit of corner 0 to
  // entry of corner 1), so runs begin on a straight stretch.
  const Eigen::Vector2d start = 0.5 * (corners[0].exit + corners[1 % n].entry);

  double s = 0.0;
  auto add_straight = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const double len = (b - a).norm();
    if (len < 1e-9) return;
    Segment seg;
    seg.arc = false;
    seg.s0 = s;
    seg.length = len;
    seg.a = a;
    seg.b = (b - a) / len;
    seg.heading = std::atan2(seg.b.y(), seg.b.x());
    segments_.push_back(seg);
    s += len;
  };
  auto add_arc = [&](const Corner& c) {
    if (std::abs(c.sweep) < 1e-9) return;
    Segment seg;
    seg.arc = true;
    seg.s0 = s;
    seg.length = r * std::abs(c.sweep);
    seg.a = c.center;
    seg.radius = r;
    seg.phi0 = c.phi0;
    seg.sign = c.sweep >= 0 ? 1.0 : -1.0;
    segments_.push_back(seg);
    s += seg.length;
  };

  add_straight(start, corners[1 % n].entry);
  for (int k = 1; k < n; ++k) {
    add_arc(corners[k]);
    add_straight(corners[k].exit, corners[(k + 1) % n].entry);
  }
  add_arc(corners[0]);
  add_straight(corners[0].exit, start);

  length_ = s;
  speed_ = spec.speed > 0.0 ? spec.speed : length_ / spec.duration;
}

const Trajectory::Segment& Trajectory::segment_at(double s, double& local) const {
  s = std::fmod(s, length_);
  if (s < 0) s += length_;
  // Binary search over segment start offsets.
  int lo = 0, hi = static_cast<int>(segments_.size()) - 1;
  while (lo < hi) {
    const int mid = (lo + hi + 1) / 2;
    if (segments_[mid].s0 <= s) lo = mid;
    else hi = mid - 1;
  }
  local = s - segments_[lo].s0;
  return segments_[lo];
}

Pose Trajectory::pose_at(double t) const {
  double local = 0.0;
  const Segment& seg = segment_at(speed_ * t, local);
  Eigen::Vector2d p;
  double heading;
  if (!seg.arc) {
    p = seg.a + seg.b * local;
    heading = seg.heading;
  } else {
    const double phi = seg.phi0 + seg.sign * local / seg.radius;
    p = seg.a + seg.radius * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    heading = phi + seg.sign * kPi / 2.0;
  }
  Pose pose;
  pose.translation = Vec3(p.x(), p.y(), spec_.sensor_height);
  pose.rotation = Quat(Eigen::AngleAxisd(heading, Vec3::UnitZ()));
  pose.stamp = t;
  return pose;
}

Vec3 Trajectory::velocity_at(double t) const {
  double local = 0.0;
  const Segment& seg = segment_at(speed_ * t, local);
  double heading;
  if (!seg.arc) {
    heading = seg.heading;
  } else {
    const double phi = seg.phi0 + seg.sign * local / seg.radius;
    heading = phi + seg.sign * kPi / 2.0;
  }
  return speed_ * Vec3(std::cos(heading), std::sin(heading), 0.0);
}

ImuSample Trajectory::imu_at(double t) const {
  double local = 0.0;
  const Segment& seg = segment_at(speed_ * t, local);
  ImuSample imu;
  imu.stamp = t;
  if (seg.arc) {
    const double omega = seg.sign * speed_ / seg.radius;
    imu.angular_velocity = Vec3(0.0, 0.0, omega);
    // Centripetal acceleration is +y in the body frame on a left turn.
    imu.linear_acceleration = Vec3(0.0, seg.sign * speed_ * speed_ / seg.radius, 9.81);
  } else {
    imu.linear_acceleration = Vec3(0.0, 0.0, 9.81);
  }
  return imu;
}

}  // namespace ndtfuse::sim
