#include "ndtfuse/odometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::odom {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> split_rings(const PointCloud& scan) {
  std::vector<std::pair<std::size_t, std::size_t>> rings;
  if (scan.empty()) return rings;
  std::size_t start = 0;
  double prev_az = std::atan2(scan.points[0].y(), scan.points[0].x());
  for (std::size_t i = 1; i < scan.size(); ++i) {
    const double az = std::atan2(scan.points[i].y(), scan.points[i].x());
    if (az < prev_az - kPi) {  // wrapped: next ring starts
      rings.emplace_back(start, i);
      start = i;
    }
    prev_az = az;
  }
  rings.emplace_back(start, scan.size());
  return rings;
}

struct Candidate {
  std::size_t index;
  double smoothness;
  bool edge_ok;  // not an occlusion boundary
};

// 2 or 3 smallest-distance indices by linear scan (feature sets are small).
template <int K>
std::array<int, K> nearest(const std::vector<Vec3>& pts, const Vec3& q) {
  std::array<int, K> best;
  std::array<double, K> dist;
  best.fill(-1);
  dist.fill(std::numeric_limits<double>::max());
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    double d = (pts[i] - q).squaredNorm();
    for (int k = 0; k < K; ++k) {
      if (d < dist[k]) {
        for (int m = K - 1; m > k; --m) {
          dist[m] = dist[m - 1];
          best[m] = best[m - 1];
        }
        dist[k] = d;
        best[k] = i;
        break;
      }
    }
  }
  return best;
}

struct Alignment {
  Pose increment;
  int correspondences = 0;
  bool ok = false;
};

// Huber weight; residuals beyond the knee contribute linearly.
inline double huber(double r, double knee = 0.1) {
  return r <= knee ? 1.0 : knee / r;
}

Alignment align_features(const FeatureSet& current, const FeatureSet& previous, const Pose& guess,
                         const OdometryParams& params) {
  Alignment out;
  Pose t = guess;

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    Mat6 h = Mat6::Zero();
    Vec6 b = Vec6::Zero();
    int valid = 0;
    const Mat3 r = t.rotation_matrix();

    for (const Vec3& e : current.edges.points) {
      const Vec3 ep = r * e + t.translation;
      const auto nn = nearest<2>(previous.edges.points, ep);
      if (nn[1] < 0) continue;
      const Vec3& a = previous.edges.points[nn[0]];
      const Vec3& c = previous.edges.points[nn[1]];
      if ((ep - a).norm() > params.edge_gate) continue;
      const Vec3 u = c - a;
      // Both support points must belong to the same structure (a corner seen
      // on nearby rings), not to two distinct corners.
      if (u.norm() < 1e-6 || u.norm() > 2.0) continue;
      const Vec3 un = u.normalized();
      const Mat3 proj = Mat3::Identity() - un * un.transpose();
      const Vec3 res = proj * (ep - a);
      Eigen::Matrix<double, 3, 6> jac;
      jac.block<3, 3>(0, 0) = proj;
      jac.block<3, 3>(0, 3) = -proj * skew(ep);
      const double wgt = params.edge_weight * huber(res.norm());
      h.noalias() += wgt * jac.transpose() * jac;
      b.noalias() += wgt * jac.transpose() * res;
      ++valid;
    }

    for (const Vec3& p : current.planes.points) {
      const Vec3 pp = r * p + t.translation;
      const auto nn = nearest<3>(previous.planes.points, pp);
      if (nn[2] < 0) continue;
      const Vec3& p1 = previous.planes.points[nn[0]];
      const Vec3& p2 = previous.planes.points[nn[1]];
      const Vec3& p3 = previous.planes.points[nn[2]];
      if ((pp - p1).norm() > params.plane_gate) continue;
      const Vec3 v12 = p2 - p1, v13 = p3 - p1;
      if (v12.norm() > 3.0 || v13.norm() > 3.0) continue;
      Vec3 n = v12.cross(v13);
      // Nearly colinear triples (three points along one scan ring) give
      // meaningless normals.
      if (n.norm() < 0.05 * v12.norm() * v13.norm()) continue;
      n.normalize();
      const double res = n.dot(pp - p1);
      Eigen::Matrix<double, 1, 6> jac;
      jac.block<1, 3>(0, 0) = n.transpose();
      jac.block<1, 3>(0, 3) = (-skew(pp).transpose() * n).transpose();
      const double wgt = huber(std::abs(res));
      h.noalias() += wgt * jac.transpose() * jac;
      b.noalias() += wgt * jac.transpose() * res;
      ++valid;
    }

    if (valid < params.min_correspondences) return out;

    double lambda = 0.0;
    Vec6 delta;
    while (true) {
      Mat6 damped = h;
      damped.diagonal().array() += lambda;
      Eigen::LLT<Mat6> llt(damped);
      if (llt.info() == Eigen::Success) {
        delta = llt.solve(-b);
        if (delta.allFinite()) break;
      }
      lambda = lambda == 0.0 ? 1e-9 : lambda * 10.0;
      if (lambda > 1e3) return out;
    }

    Pose upd;
    upd.translation = delta.head<3>();
    upd.rotation = quat_exp(delta.tail<3>());
    t = compose(upd, t);
    out.correspondences = valid;
    if (delta.norm() < params.step_tolerance) break;
  }

  out.increment = t;
  out.ok = true;
  return out;
}

inline std::int64_t voxel_key(const Vec3& p, double inv) {
  const auto ix = static_cast<std::int64_t>(std::floor(p.x() * inv));
  const auto iy = static_cast<std::int64_t>(std::floor(p.y() * inv));
  const auto iz = static_cast<std::int64_t>(std::floor(p.z() * inv));
  return ((ix & 0x1FFFFF) << 42) | ((iy & 0x1FFFFF) << 21) | (iz & 0x1FFFFF);
}

void accumulate_map(OdometryState& state, const PointCloud& scan, const OdometryParams& params) {
  const Mat3 r = state.pose.rotation_matrix();
  const double inv = 1.0 / params.map_voxel;
  for (const Vec3& x : scan.points) {
    const Vec3 p = r * x + state.pose.translation;
    if (state.map_voxels.insert(voxel_key(p, inv)).second) {
      state.accumulated_map.points.push_back(p);
    }
  }
  state.accumulated_map.stamp = scan.stamp;
  state.accumulated_map.frame = Frame::odom;
}

}  // namespace

FeatureSet extract_features(const PointCloud& scan, int ring_count, const OdometryParams& params) {
  FeatureSet out;
  out.stamp = scan.stamp;
  out.edges.frame = out.planes.frame = scan.frame;
  out.edges.stamp = out.planes.stamp = scan.stamp;

  auto rings = split_rings(scan);
  if (static_cast<int>(rings.size()) > ring_count) rings.resize(ring_count);

  const int w = params.neighbor_half_width;
  int usable_rings = 0;
  for (const auto& [begin, end] : rings) {
    const int n = static_cast<int>(end - begin);
    if (n < params.min_ring_points) continue;
    ++usable_rings;

    std::vector<Candidate> cands;
    cands.reserve(n);
    for (int i = w; i < n - w; ++i) {
      const Vec3& xi = scan.points[begin + i];
      Vec3 sum = Vec3::Zero();
      for (int j = -w; j <= w; ++j) {
        if (j == 0) continue;
        sum += scan.points[begin + i + j] - xi;
      }
      const double c = sum.norm() / (10.0 * std::max(xi.norm(), 1e-6));
      const double r_prev = scan.points[begin + i - 1].norm();
      const double r_next = scan.points[begin + i + 1].norm();
      const double ri = xi.norm();
      const bool edge_ok = std::abs(ri - r_prev) <= params.range_jump &&
                           std::abs(ri - r_next) <= params.range_jump;
      cands.push_back({static_cast<std::size_t>(begin + i), c, edge_ok});
    }
    if (cands.empty()) continue;

    // Quadrants by position along the ring, quotas per quadrant.
    const std::size_t qsize = (cands.size() + 3) / 4;
    for (std::size_t q = 0; q < 4; ++q) {
      const std::size_t qa = q * qsize;
      if (qa >= cands.size()) break;
      const std::size_t qb = std::min(cands.size(), qa + qsize);
      std::vector<const Candidate*> sorted;
      sorted.reserve(qb - qa);
      for (std::size_t i = qa; i < qb; ++i) sorted.push_back(&cands[i]);
      std::sort(sorted.begin(), sorted.end(),
                [](const Candidate* a, const Candidate* b) { return a->smoothness > b->smoothness; });

      std::unordered_set<std::size_t> taken;
      int picked = 0;
      for (const Candidate* c : sorted) {
        if (picked >= params.edges_per_quadrant || c->smoothness <= params.edge_threshold) break;
        if (!c->edge_ok || taken.count(c->index)) continue;
        out.edges.points.push_back(scan.points[c->index]);
        for (std::size_t d = 0; d <= 2; ++d) {
          taken.insert(c->index + d);
          taken.insert(c->index - d);
        }
        ++picked;
      }
      picked = 0;
      for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) {
        const Candidate* c = *it;
        if (picked >= params.planes_per_quadrant || c->smoothness >= params.plane_threshold) break;
        if (taken.count(c->index)) continue;
        out.planes.points.push_back(scan.points[c->index]);
        for (std::size_t d = 0; d <= 2; ++d) {
          taken.insert(c->index + d);
          taken.insert(c->index - d);
        }
        ++picked;
      }
    }
  }

  if (usable_rings == 0) {
    throw TooFewPoints("extract_features: no ring with at least " +
                       std::to_string(params.min_ring_points) + " points");
  }
  return out;
}

OdometryState init_odometry(const PointCloud& first_scan, const Pose& anchor,
                            const OdometryParams& params) {
  OdometryState state;
  state.pose = anchor;
  state.pose.stamp = first_scan.stamp;
  state.previous_features = extract_features(first_scan, params.ring_count, params);
  state.last_increment = Pose::identity();
  state.initialized = true;
  accumulate_map(state, first_scan, params);
  return state;
}

OdometryState& step(OdometryState& state, const PointCloud& scan, const OdometryParams& params) {
  if (!state.initialized) throw Error("odometry step before init");

  FeatureSet features;
  bool have_features = true;
  try {
    features = extract_features(scan, params.ring_count, params);
  } catch (const TooFewPoints&) {
    have_features = false;
  }

  Alignment alignment;
  if (have_features) {
    alignment = align_features(features, state.previous_features, state.last_increment, params);
  }

  if (!have_features || !alignment.ok) {
    // Constant-velocity fallback, flagged for downstream consumers.
    state.pose = compose(state.pose, state.last_increment);
    state.pose.stamp = scan.stamp;
    state.last_step_fallback = true;
    if (have_features) state.previous_features = std::move(features);
    return state;
  }

  // increment maps the current body frame into the previous one.
  state.pose = compose(state.pose, alignment.increment);
  state.pose.stamp = scan.stamp;
  state.last_increment = alignment.increment;
  state.last_step_fallback = false;
  state.previous_features = std::move(features);
  accumulate_map(state, scan, params);
  return state;
}

}  // namespace ndtfuse::odom
