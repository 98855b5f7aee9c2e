#include <algorithm>
#include <cmath>
#include <limits>

#include "cograsp/corridor_planner.hpp"
#include "cograsp/errors.hpp"

namespace cograsp {

ConvexRegion::ConvexRegion(std::size_t dim, std::vector<Halfspace> halfspaces)
    : dim_(dim), halfspaces_(std::move(halfspaces)) {
  for (const auto& h : halfspaces_) {
    if (h.normal.size() != dim_) throw ValidationError("halfspace normal has wrong dimension");
    double n2 = 0.0;
    for (double v : h.normal) n2 += v * v;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-9) throw ValidationError("halfspace normal is not unit length");
  }
}

ConvexRegion ConvexRegion::box(std::span<const double> lo, std::span<const double> hi) {
  if (lo.size() != hi.size()) throw ValidationError("box bounds differ in dimension");
  std::vector<Halfspace> hs;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) throw ValidationError("box lower bound exceeds upper bound");
    std::vector<double> n(lo.size(), 0.0);
    n[i] = 1.0;
    hs.push_back({n, hi[i]});
    n[i] = -1.0;
    hs.push_back({n, -lo[i]});
  }
  return ConvexRegion(lo.size(), std::move(hs));
}

double ConvexRegion::max_violation(std::span<const double> x) const {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& h : halfspaces_) {
    double v = -h.offset;
    for (std::size_t i = 0; i < dim_; ++i) v += h.normal[i] * x[i];
    worst = std::max(worst, v);
  }
  return worst;
}

std::optional<Box> ConvexRegion::as_box() const {
  const double inf = std::numeric_limits<double>::infinity();
  Box b{std::vector<double>(dim_, -inf), std::vector<double>(dim_, inf)};
  for (const auto& h : halfspaces_) {
    std::size_t axis = dim_;
    for (std::size_t i = 0; i < dim_; ++i) {
      if (h.normal[i] == 0.0) continue;
      if (axis != dim_ || std::abs(h.normal[i]) != 1.0) return std::nullopt;
      axis = i;
    }
    if (axis == dim_) return std::nullopt;
    if (h.normal[axis] > 0.0) {
      b.hi[axis] = std::min(b.hi[axis], h.offset);
    } else {
      b.lo[axis] = std::max(b.lo[axis], -h.offset);
    }
  }
  for (std::size_t i = 0; i < dim_; ++i) {
    if (!std::isfinite(b.lo[i]) || !std::isfinite(b.hi[i])) return std::nullopt;
  }
  return b;
}

namespace {

Box require_box(const ConvexRegion& r) {
  auto b = r.as_box();
  if (!b) throw ValidationError("only axis-aligned box regions are supported");
  return *b;
}

}  // namespace

bool regions_intersect(const ConvexRegion& a, const ConvexRegion& b) {
  if (a.dim() != b.dim()) throw ValidationError("regions differ in dimension");
  const Box ba = require_box(a);
  const Box bb = require_box(b);
  for (std::size_t i = 0; i < a.dim(); ++i) {
    if (std::max(ba.lo[i], bb.lo[i]) > std::min(ba.hi[i], bb.hi[i])) return false;
  }
  return true;
}

JointState bezier_eval(const BezierSegment& seg, double s) {
  const double u = 1.0 - s;
  const double b[4] = {u * u * u, 3.0 * s * u * u, 3.0 * s * s * u, s * s * s};
  JointState out{};
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t d = 0; d < kJointDim; ++d) out[d] += b[j] * seg.control_points[j][d];
  }
  return out;
}

JointState bezier_derivative(const BezierSegment& seg, double s, int order, double span) {
  const auto& c = seg.control_points;
  JointState out{};
  const double u = 1.0 - s;
  if (order == 1) {
    const double w[3] = {3.0 * u * u / span, 6.0 * s * u / span, 3.0 * s * s / span};
    for (std::size_t d = 0; d < kJointDim; ++d) {
      out[d] = w[0] * (c[1][d] - c[0][d]) + w[1] * (c[2][d] - c[1][d]) + w[2] * (c[3][d] - c[2][d]);
    }
  } else if (order == 2) {
    const double k = 6.0 / (span * span);
    for (std::size_t d = 0; d < kJointDim; ++d) {
      out[d] = k * (u * (c[2][d] - 2.0 * c[1][d] + c[0][d]) + s * (c[3][d] - 2.0 * c[2][d] + c[1][d]));
    }
  } else {
    throw ValidationError("bezier_derivative supports order 1 or 2");
  }
  return out;
}

namespace {

// Integer face extents of a box grown around a seed: {+x, -x, +y, -y, +yaw, -yaw}.
using Extents = std::array<long, 6>;

bool cells_free(const OccupancyMap& map, std::int64_t x0, std::int64_t x1, std::int64_t y0, std::int64_t y1) {
  for (std::int64_t iy = y0; iy <= y1; ++iy) {
    for (std::int64_t ix = x0; ix <= x1; ++ix) {
      if (map.is_obstacle(ix, iy)) return false;
    }
  }
  return true;
}

ConvexRegion grow_point_box(const OccupancyMap& map, double sx, double sy) {
  const double r = map.resolution();
  if (!point_in_free_space(map, {sx, sy})) throw SeedInCollision("robot region seed lies in an obstacle");
  Extents e{};
  std::array<bool, 4> active{true, true, true, true};
  auto lo_x = [&] { return sx - static_cast<double>(e[1]) * r; };
  auto hi_x = [&] { return sx + static_cast<double>(e[0]) * r; };
  auto lo_y = [&] { return sy - static_cast<double>(e[3]) * r; };
  auto hi_y = [&] { return sy + static_cast<double>(e[2]) * r; };
  while (active[0] || active[1] || active[2] || active[3]) {
    for (std::size_t f = 0; f < 4; ++f) {
      if (!active[f]) continue;
      bool ok = false;
      const std::int64_t cx0 = map.cell_x(lo_x());
      const std::int64_t cx1 = map.cell_x(hi_x());
      const std::int64_t cy0 = map.cell_y(lo_y());
      const std::int64_t cy1 = map.cell_y(hi_y());
      switch (f) {
        case 0: ok = cells_free(map, cx1, map.cell_x(hi_x() + r), cy0, cy1); break;
        case 1: ok = cells_free(map, map.cell_x(lo_x() - r), cx0, cy0, cy1); break;
        case 2: ok = cells_free(map, cx0, cx1, cy1, map.cell_y(hi_y() + r)); break;
        case 3: ok = cells_free(map, cx0, cx1, map.cell_y(lo_y() - r), cy0); break;
      }
      if (ok) {
        ++e[f];
      } else {
        active[f] = false;
      }
    }
  }
  const double lo[2] = {lo_x(), lo_y()};
  const double hi[2] = {hi_x(), hi_y()};
  return ConvexRegion::box(lo, hi);
}

ConvexRegion grow_pose_box(const OccupancyMap& map, const ObjectShape& object, double sx, double sy, double syaw,
                           const GrowConfig& cfg) {
  const double r = map.resolution();
  const double dyaw = cfg.yaw_step;
  const long yaw_limit = static_cast<long>(std::floor(cfg.max_yaw_half_range / dyaw + 1e-9));
  const PolygonSampler sampler(object, r);
  if (sampler.collides(map, sx, sy, syaw)) throw SeedInCollision("object region seed pose is in collision");
  Extents e{};
  std::array<bool, 6> active{true, true, true, true, yaw_limit > 0, yaw_limit > 0};

  // Checks every grid pose with x index in [ix0, ix1], etc.
  auto slab_free = [&](long ix0, long ix1, long iy0, long iy1, long it0, long it1) {
    for (long it = it0; it <= it1; ++it) {
      const double yaw = syaw + static_cast<double>(it) * dyaw;
      for (long iy = iy0; iy <= iy1; ++iy) {
        const double y = sy + static_cast<double>(iy) * r;
        for (long ix = ix0; ix <= ix1; ++ix) {
          if (sampler.collides(map, sx + static_cast<double>(ix) * r, y, yaw)) return false;
        }
      }
    }
    return true;
  };

  bool any = true;
  while (any) {
    any = false;
    for (std::size_t f = 0; f < 6; ++f) {
      if (!active[f]) continue;
      const long xp = e[0], xm = -e[1], yp = e[2], ym = -e[3], tp = e[4], tm = -e[5];
      bool ok = false;
      switch (f) {
        case 0: ok = slab_free(xp + 1, xp + 1, ym, yp, tm, tp); break;
        case 1: ok = slab_free(xm - 1, xm - 1, ym, yp, tm, tp); break;
        case 2: ok = slab_free(xm, xp, yp + 1, yp + 1, tm, tp); break;
        case 3: ok = slab_free(xm, xp, ym - 1, ym - 1, tm, tp); break;
        case 4: ok = slab_free(xm, xp, ym, yp, tp + 1, tp + 1); break;
        case 5: ok = slab_free(xm, xp, ym, yp, tm - 1, tm - 1); break;
      }
      if (ok) {
        ++e[f];
        if ((f == 4 || f == 5) && e[f] >= yaw_limit) active[f] = false;
        any = true;
      } else {
        active[f] = false;
      }
    }
  }
  const double lo[3] = {sx - static_cast<double>(e[1]) * r, sy - static_cast<double>(e[3]) * r,
                        syaw - static_cast<double>(e[5]) * dyaw};
  const double hi[3] = {sx + static_cast<double>(e[0]) * r, sy + static_cast<double>(e[2]) * r,
                        syaw + static_cast<double>(e[4]) * dyaw};
  return ConvexRegion::box(lo, hi);
}

}  // namespace

ConvexRegion grow_convex_region(const OccupancyMap& map, std::span<const double> seed, const ObjectShape* object,
                                const GrowConfig& cfg) {
  if (seed.size() == 2) return grow_point_box(map, seed[0], seed[1]);
  if (seed.size() == 3) {
    if (object == nullptr) throw ValidationError("3-D region growth needs an object shape");
    return grow_pose_box(map, *object, seed[0], seed[1], seed[2], cfg);
  }
  throw ValidationError("region seeds must be 2-D or 3-D");
}

RegionSequence build_region_sequence(const OccupancyMap& map, const Pose2& start, const Pose2& goal,
                                     std::span<const Pose2> seeds, const ObjectShape& object,
                                     const GrowConfig& cfg) {
  if (seeds.size() < 2) throw ValidationError("region sequence needs at least two seeds");
  RegionSequence seq;
  seq.start_yaw = start.yaw;
  double prev = start.yaw;
  for (const auto& s : seeds) {
    const double yaw = prev + wrap_angle(s.yaw - prev);
    prev = yaw;
    seq.seeds.push_back(s);
    seq.seed_yaws.push_back(yaw);
    const double p2[2] = {s.position.x, s.position.y};
    const double p3[3] = {s.position.x, s.position.y, yaw};
    seq.robot_regions.push_back(grow_convex_region(map, p2, nullptr, cfg));
    seq.object_regions.push_back(grow_convex_region(map, p3, &object, cfg));
  }
  seq.goal_yaw = prev + wrap_angle(goal.yaw - prev);
  for (std::size_t k = 0; k + 1 < seeds.size(); ++k) {
    if (!regions_intersect(seq.robot_regions[k], seq.robot_regions[k + 1])) throw BrokenChain(k, "robot");
    if (!regions_intersect(seq.object_regions[k], seq.object_regions[k + 1])) throw BrokenChain(k, "object");
  }
  const double s3[3] = {start.position.x, start.position.y, seq.start_yaw};
  const double g3[3] = {goal.position.x, goal.position.y, seq.goal_yaw};
  if (!seq.object_regions.front().contains(s3)) throw UncoveredEndpoint("first object region misses the start pose");
  if (!seq.object_regions.back().contains(g3)) throw UncoveredEndpoint("last object region misses the goal pose");
  return seq;
}

GraspAnchors grasp_anchors(const ObjectShape& object, const Pose2& start_pose, const GraspConfiguration& g) {
  (void)object;
  const Pose2 inv = inverse(start_pose);
  return {transform_point(inv, g.grasp), transform_point(inv, g.base)};
}

}  // namespace cograsp
