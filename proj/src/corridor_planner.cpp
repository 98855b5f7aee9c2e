#include "cograsp/corridor_planner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

#include "cograsp/errors.hpp"

namespace cograsp {

void PlannerConfig::validate() const {
  if (!(w_F >= 0.0)) throw ValidationError("w_F must be >= 0");
  if (!(r_min >= 0.0 && r_min < r_max)) throw ValidationError("need 0 <= r_min < r_max");
  if (r_collision && !(*r_collision > 0.0)) throw ValidationError("r_collision must be > 0");
  if (quadrature_points_per_segment < 4) throw ValidationError("quadrature_points_per_segment must be >= 4");
  if (!(constraint_tolerance > 0.0)) throw ValidationError("constraint_tolerance must be > 0");
  if (!(constraint_margin >= 0.0)) throw ValidationError("constraint_margin must be >= 0");
  if (max_outer_iterations < 1 || max_inner_iterations < 1) throw ValidationError("iteration limits must be >= 1");
  if (!(initial_penalty > 0.0) || !(penalty_growth > 1.0)) throw ValidationError("need penalty > 0 and growth > 1");
  if (!(duration > 0.0)) throw ValidationError("duration must be > 0");
  if (!(length_epsilon > 0.0)) throw ValidationError("length_epsilon must be > 0");
  if (verification_samples < 2) throw ValidationError("verification_samples must be >= 2");
}

double ConstraintReport::worst() const { return std::max({annulus_min, annulus_max, formation}); }

std::pair<std::size_t, double> TrajectorySolution::locate(double t) const {
  if (segments.empty()) throw ValidationError("trajectory has no segments");
  const auto m = segments.size();
  const double h = duration / static_cast<double>(m);
  t = std::clamp(t, 0.0, duration);
  const auto k = std::min(static_cast<std::size_t>(std::floor(t / h)), m - 1);
  return {k, std::clamp((t - static_cast<double>(k) * h) / h, 0.0, 1.0)};
}

JointState TrajectorySolution::eval(double t) const {
  const auto [k, s] = locate(t);
  return bezier_eval(segments[k], s);
}

double collision_radius(const Scenario& scenario, const GraspConfiguration& g, const PlannerConfig& cfg) {
  if (cfg.r_collision) return *cfg.r_collision;
  const auto poly = posed_vertices(scenario.object, scenario.start_pose);
  const double clearance = distance_to_polygon(poly, g.base) - cfg.base_footprint_radius - scenario.map.resolution();
  return std::max(cfg.min_collision_radius, clearance);
}

namespace {

using Controls = std::vector<std::array<JointState, 4>>;

Box require_box(const ConvexRegion& r) {
  auto b = r.as_box();
  if (!b) throw ValidationError("planner needs axis-aligned box regions");
  return *b;
}

struct NodeBasis {
  double b[4];
  double d1[4];  // d/ds
  double d2[4];  // d2/ds2
  double weight;
  double s;
};

std::vector<NodeBasis> basis_table(std::size_t n) {
  // Gauss-Legendre nodes on [-1, 1] by Newton iteration, mapped to [0, 1].
  std::vector<NodeBasis> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * static_cast<double>(k) - 1.0) * x * p1 - (static_cast<double>(k) - 1.0) * p0) /
                          static_cast<double>(k);
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const double s = 0.5 * (1.0 - x);
    const double u = 1.0 - s;
    NodeBasis& nb = out[i];
    nb.weight = 0.5 * w;
    nb.s = s;
    nb.b[0] = u * u * u;
    nb.b[1] = 3.0 * s * u * u;
    nb.b[2] = 3.0 * s * s * u;
    nb.b[3] = s * s * s;
    nb.d1[0] = -3.0 * u * u;
    nb.d1[1] = 3.0 * u * u - 6.0 * s * u;
    nb.d1[2] = 6.0 * s * u - 3.0 * s * s;
    nb.d1[3] = 3.0 * s * s;
    nb.d2[0] = 6.0 * u;
    nb.d2[1] = -12.0 * u + 6.0 * s;
    nb.d2[2] = 6.0 * u - 12.0 * s;
    nb.d2[3] = 6.0 * s;
  }
  return out;
}

Vec2 rotated(const Vec2& v, double c, double s) { return {c * v.x - s * v.y, s * v.x + c * v.y}; }

struct PenaltySpec {
  double mu;
  double margin;
  std::array<double, 2> r_col;
};

// Objective (plus optional node penalty) over all segments, with gradient
// with respect to every control point when `grad` is non-null.
double accumulate(const Controls& cp, double h, const std::vector<NodeBasis>& nodes,
                  const std::array<GraspAnchors, 2>& anchors, const PlannerConfig& cfg, const PenaltySpec* pen,
                  Controls* grad, ObjectiveTerms* terms, double* violation) {
  if (grad != nullptr) grad->assign(cp.size(), {});
  const double eps = cfg.length_epsilon;
  double length = 0.0, velocity = 0.0, smooth = 0.0, formation = 0.0, penalty = 0.0, viol = 0.0;
  for (std::size_t k = 0; k < cp.size(); ++k) {
    const auto& c = cp[k];
    for (const auto& nb : nodes) {
      // Derivatives from control-point differences, so equal points give exact zeros.
      JointState q{}, dq{}, ddq{};
      for (std::size_t d = 0; d < kJointDim; ++d) {
        const double e0 = c[1][d] - c[0][d], e1 = c[2][d] - c[1][d], e2 = c[3][d] - c[2][d];
        for (std::size_t j = 0; j < 4; ++j) q[d] += nb.b[j] * c[j][d];
        dq[d] = (-nb.d1[0] * e0 + 6.0 * nb.s * (1.0 - nb.s) * e1 + nb.d1[3] * e2) / h;
        ddq[d] = (nb.d2[0] * (e1 - e0) + nb.d2[3] * (e2 - e1)) / (h * h);
      }
      const double wh = nb.weight * h;
      JointState gq{}, gdq{}, gddq{};

      double n2 = 0.0, m2 = 0.0;
      for (std::size_t d = 0; d < kJointDim; ++d) {
        n2 += dq[d] * dq[d];
        m2 += ddq[d] * ddq[d];
      }
      const double sq = std::sqrt(n2 + eps * eps);
      length += wh * (sq - eps);
      velocity += wh * n2;
      smooth += wh * m2;
      for (std::size_t d = 0; d < kJointDim; ++d) {
        gdq[d] += wh * dq[d] / sq + 2.0 * wh * dq[d];
        gddq[d] += 2.0 * wh * ddq[d];
      }

      const double cth = std::cos(q[6]);
      const double sth = std::sin(q[6]);
      for (std::size_t i = 0; i < 2; ++i) {
        const Vec2 a = rotated(anchors[i].base, cth, sth);
        const Vec2 pa = a.perp();
        const Vec2 e{dq[2 * i] - dq[4] - dq[6] * pa.x, dq[2 * i + 1] - dq[5] - dq[6] * pa.y};
        formation += wh * e.dot(e);
        const double coef = 2.0 * cfg.w_F * wh;
        gdq[2 * i] += coef * e.x;
        gdq[2 * i + 1] += coef * e.y;
        gdq[4] -= coef * e.x;
        gdq[5] -= coef * e.y;
        gdq[6] -= coef * e.dot(pa);
        gq[6] += coef * dq[6] * e.dot(a);
      }

      if (pen != nullptr) {
        const Vec2 o{q[4], q[5]};
        for (std::size_t i = 0; i < 2; ++i) {
          const Vec2 r{q[2 * i], q[2 * i + 1]};
          // Distance term d = |r - (o + R a)| with dd/dr = u, dd/do = -u, dd/dtheta = -u . perp(R a).
          auto add = [&](const Vec2& anchor, double g, double sign) {
            if (g <= 0.0) return;
            const Vec2 ra = rotated(anchor, cth, sth);
            const Vec2 diff = r - (o + ra);
            const double dist = diff.norm();
            penalty += pen->mu * g * g;
            viol += g;
            if (dist <= 0.0) return;
            const Vec2 u = diff * (1.0 / dist);
            const double k = 2.0 * pen->mu * g * sign;
            gq[2 * i] += k * u.x;
            gq[2 * i + 1] += k * u.y;
            gq[4] -= k * u.x;
            gq[5] -= k * u.y;
            gq[6] -= k * u.dot(ra.perp());
          };
          const double dg = (r - (o + rotated(anchors[i].grasp, cth, sth))).norm();
          const double db = (r - (o + rotated(anchors[i].base, cth, sth))).norm();
          add(anchors[i].grasp, cfg.r_min + pen->margin - dg, -1.0);
          add(anchors[i].grasp, dg - (cfg.r_max - pen->margin), 1.0);
          add(anchors[i].base, db - (pen->r_col[i] - pen->margin), 1.0);
        }
      }

      if (grad != nullptr) {
        auto& g = (*grad)[k];
        for (std::size_t j = 0; j < 4; ++j) {
          for (std::size_t d = 0; d < kJointDim; ++d) {
            g[j][d] += nb.b[j] * gq[d] + nb.d1[j] / h * gdq[d] + nb.d2[j] / (h * h) * gddq[d];
          }
        }
      }
    }
  }
  const double total = length + velocity + smooth + cfg.w_F * formation;
  if (terms != nullptr) *terms = {length, velocity, smooth, formation, total};
  if (violation != nullptr) *violation = viol;
  return total + penalty;
}

void update_report(ConstraintReport& rep, const JointState& q, const std::array<GraspAnchors, 2>& anchors,
                   const std::array<double, 2>& r_col, const PlannerConfig& cfg) {
  const Pose2 pose({q[4], q[5]}, q[6]);
  for (std::size_t i = 0; i < 2; ++i) {
    const Vec2 r{q[2 * i], q[2 * i + 1]};
    const double dg = distance(r, transform_point(pose, anchors[i].grasp));
    const double db = distance(r, transform_point(pose, anchors[i].base));
    rep.annulus_min = std::max(rep.annulus_min, cfg.r_min - dg);
    rep.annulus_max = std::max(rep.annulus_max, dg - cfg.r_max);
    rep.formation = std::max(rep.formation, db - r_col[i]);
  }
}

// Exact Euclidean projection of (a, b) onto
//   a in [la, ha],  b in [li, hi],  2b - a in [ln, hn].
std::pair<double, double> project_junction(double a, double b, double la, double ha, double li, double hi, double ln,
                                           double hn) {
  struct Line {
    double na, nb, c;  // na*a + nb*b <= c
  };
  const Line lines[6] = {{1, 0, ha}, {-1, 0, -la}, {0, 1, hi}, {0, -1, -li}, {-1, 2, hn}, {1, -2, -ln}};
  const double scale = 1.0 + std::max({std::abs(ha), std::abs(la), std::abs(hi), std::abs(li), std::abs(hn),
                                       std::abs(ln)});
  auto feasible = [&](double x, double y, double tol) {
    for (const auto& l : lines) {
      if (l.na * x + l.nb * y - l.c > tol) return false;
    }
    return true;
  };
  if (feasible(a, b, 0.0)) return {a, b};
  const double tol = 1e-12 * scale;
  double best = std::numeric_limits<double>::infinity();
  std::pair<double, double> out{std::clamp(b, std::max(li, la), std::min(hi, ha)), 0.0};
  out.second = out.first;
  auto consider = [&](double x, double y) {
    if (!feasible(x, y, tol)) return;
    const double d = (x - a) * (x - a) + (y - b) * (y - b);
    if (d < best) {
      best = d;
      out = {x, y};
    }
  };
  for (const auto& l : lines) {
    const double t = (l.na * a + l.nb * b - l.c) / (l.na * l.na + l.nb * l.nb);
    consider(a - t * l.na, b - t * l.nb);
  }
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) {
      const double det = lines[i].na * lines[j].nb - lines[i].nb * lines[j].na;
      if (std::abs(det) < 1e-15) continue;
      consider((lines[i].c * lines[j].nb - lines[i].nb * lines[j].c) / det,
               (lines[i].na * lines[j].c - lines[i].c * lines[j].na) / det);
    }
  }
  return out;
}

// Free variables: the handle (c2) and end point (c3) of every segment except the last.
struct Junction {
  JointState handle{};
  JointState point{};
};
using FreeVars = std::vector<Junction>;

class TransportSolver {
 public:
  TransportSolver(const TransportProblem& p, const PlannerConfig& cfg)
      : p_(p), cfg_(cfg), m_(p.robot_boxes.size()), h_(cfg.duration / static_cast<double>(m_)),
        nodes_(basis_table(cfg.quadrature_points_per_segment)) {}

  std::size_t segments() const { return m_; }

  std::pair<double, double> bounds(std::size_t region, std::size_t d) const {
    if (d < 4) {
      const auto& b = p_.robot_boxes[region];
      return {b.lo[d % 2], b.hi[d % 2]};
    }
    const auto& b = p_.object_boxes[region];
    return {b.lo[d - 4], b.hi[d - 4]};
  }

  bool endpoints_inside() const {
    for (std::size_t d = 0; d < kJointDim; ++d) {
      const auto [l0, h0] = bounds(0, d);
      const auto [l1, h1] = bounds(m_ - 1, d);
      if (p_.start[d] < l0 - 1e-9 || p_.start[d] > h0 + 1e-9) return false;
      if (p_.goal[d] < l1 - 1e-9 || p_.goal[d] > h1 + 1e-9) return false;
    }
    return true;
  }

  Controls assemble(const FreeVars& z) const {
    Controls cp(m_);
    for (std::size_t k = 0; k < m_; ++k) {
      if (k == 0) {
        cp[k][0] = p_.start;
        cp[k][1] = p_.start;
      } else {
        cp[k][0] = z[k - 1].point;
        for (std::size_t d = 0; d < kJointDim; ++d) cp[k][1][d] = 2.0 * z[k - 1].point[d] - z[k - 1].handle[d];
      }
      if (k + 1 == m_) {
        cp[k][2] = p_.goal;
        cp[k][3] = p_.goal;
      } else {
        cp[k][2] = z[k].handle;
        cp[k][3] = z[k].point;
      }
    }
    return cp;
  }

  FreeVars pull_back(const Controls& g) const {
    FreeVars gz(m_ - 1);
    for (std::size_t k = 0; k < m_; ++k) {
      for (std::size_t d = 0; d < kJointDim; ++d) {
        if (k > 0) {
          gz[k - 1].point[d] += g[k][0][d] + 2.0 * g[k][1][d];
          gz[k - 1].handle[d] -= g[k][1][d];
        }
        if (k + 1 < m_) {
          gz[k].handle[d] += g[k][2][d];
          gz[k].point[d] += g[k][3][d];
        }
      }
    }
    return gz;
  }

  void project(FreeVars& z) const {
    for (std::size_t j = 0; j < z.size(); ++j) {
      for (std::size_t d = 0; d < kJointDim; ++d) {
        const auto [la, ha] = bounds(j, d);
        const auto [ln, hn] = bounds(j + 1, d);
        const auto [a, b] = project_junction(z[j].handle[d], z[j].point[d], la, ha, std::max(la, ln),
                                             std::min(ha, hn), ln, hn);
        z[j].handle[d] = a;
        z[j].point[d] = b;
      }
    }
  }

  double value(const FreeVars& z, double mu, FreeVars* gz, double* viol) const {
    const PenaltySpec pen{mu, cfg_.constraint_margin, p_.r_collision};
    Controls g;
    const double f = accumulate(assemble(z), h_, nodes_, p_.anchors, cfg_, &pen, gz ? &g : nullptr, nullptr, viol);
    if (gz != nullptr) *gz = pull_back(g);
    return f;
  }

  double violation(const FreeVars& z) const {
    double v = 0.0;
    value(z, 0.0, nullptr, &v);
    return v;
  }

  FreeVars initial_guess() const {
    FreeVars z(m_ - 1);
    std::vector<JointState> w(m_ + 1);
    w.front() = p_.start;
    w.back() = p_.goal;
    for (std::size_t j = 0; j + 1 < m_; ++j) {
      JointState& q = w[j + 1];
      const Vec2 mid = (p_.seed_positions[j] + p_.seed_positions[j + 1]) * 0.5;
      const double yaw = 0.5 * (p_.seed_yaws[j] + p_.seed_yaws[j + 1]);
      const double obj[3] = {mid.x, mid.y, yaw};
      for (std::size_t d = 0; d < 3; ++d) {
        const auto [la, ha] = bounds(j, 4 + d);
        const auto [lb, hb] = bounds(j + 1, 4 + d);
        q[4 + d] = std::clamp(obj[d], std::max(la, lb), std::min(ha, hb));
      }
      const Pose2 pose({q[4], q[5]}, q[6]);
      for (std::size_t i = 0; i < 2; ++i) {
        const Vec2 r = transform_point(pose, p_.anchors[i].base);
        q[2 * i] = r.x;
        q[2 * i + 1] = r.y;
      }
    }
    for (std::size_t j = 0; j + 1 < m_; ++j) {
      z[j].point = w[j + 1];
      for (std::size_t d = 0; d < kJointDim; ++d) z[j].handle[d] = w[j + 1][d] - (w[j + 2][d] - w[j][d]) / 6.0;
    }
    project(z);
    return z;
  }

  // Spectral projected gradient with a nonmonotone Armijo rule.
  FreeVars minimize(FreeVars z, double mu) const {
    if (z.empty()) return z;
    constexpr std::size_t kMemory = 10;
    constexpr double kGamma = 1e-4;
    FreeVars g;
    double f = value(z, mu, &g, nullptr);
    std::deque<double> recent{f};
    auto step_to = [&](const FreeVars& x, const FreeVars& grad, double alpha) {
      FreeVars y = x;
      for (std::size_t j = 0; j < y.size(); ++j) {
        for (std::size_t d = 0; d < kJointDim; ++d) {
          y[j].handle[d] -= alpha * grad[j].handle[d];
          y[j].point[d] -= alpha * grad[j].point[d];
        }
      }
      project(y);
      return y;
    };
    auto inf_norm_diff = [](const FreeVars& a, const FreeVars& b) {
      double n = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        for (std::size_t d = 0; d < kJointDim; ++d) {
          n = std::max({n, std::abs(a[j].handle[d] - b[j].handle[d]), std::abs(a[j].point[d] - b[j].point[d])});
        }
      }
      return n;
    };
    const double pg0 = inf_norm_diff(step_to(z, g, 1.0), z);
    if (pg0 < 1e-12) return z;
    double alpha = std::clamp(1.0 / pg0, 1e-10, 1e10);
    for (std::size_t it = 0; it < cfg_.max_inner_iterations; ++it) {
      const FreeVars target = step_to(z, g, alpha);
      FreeVars dir(z.size());
      double gd = 0.0;
      for (std::size_t j = 0; j < z.size(); ++j) {
        for (std::size_t d = 0; d < kJointDim; ++d) {
          dir[j].handle[d] = target[j].handle[d] - z[j].handle[d];
          dir[j].point[d] = target[j].point[d] - z[j].point[d];
          gd += g[j].handle[d] * dir[j].handle[d] + g[j].point[d] * dir[j].point[d];
        }
      }
      if (inf_norm_diff(target, z) < 1e-12 || gd >= 0.0) break;
      const double f_ref = *std::max_element(recent.begin(), recent.end());
      double lambda = 1.0;
      FreeVars zn, gn;
      double fn = 0.0;
      bool accepted = false;
      while (lambda > 1e-12) {
        zn = z;
        for (std::size_t j = 0; j < z.size(); ++j) {
          for (std::size_t d = 0; d < kJointDim; ++d) {
            zn[j].handle[d] += lambda * dir[j].handle[d];
            zn[j].point[d] += lambda * dir[j].point[d];
          }
        }
        fn = value(zn, mu, &gn, nullptr);
        if (fn <= f_ref + kGamma * lambda * gd) {
          accepted = true;
          break;
        }
        lambda *= 0.5;
      }
      if (!accepted) break;
      double ss = 0.0, sy = 0.0;
      for (std::size_t j = 0; j < z.size(); ++j) {
        for (std::size_t d = 0; d < kJointDim; ++d) {
          const double s1 = zn[j].handle[d] - z[j].handle[d];
          const double s2 = zn[j].point[d] - z[j].point[d];
          ss += s1 * s1 + s2 * s2;
          sy += s1 * (gn[j].handle[d] - g[j].handle[d]) + s2 * (gn[j].point[d] - g[j].point[d]);
        }
      }
      alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : 1e10;
      z = std::move(zn);
      g = std::move(gn);
      f = fn;
      recent.push_back(f);
      if (recent.size() > kMemory) recent.pop_front();
    }
    return z;
  }

  TrajectorySolution to_solution(const FreeVars& z) const {
    TrajectorySolution sol;
    sol.duration = cfg_.duration;
    const Controls cp = assemble(z);
    for (std::size_t k = 0; k < m_; ++k) sol.segments.push_back({cp[k], k});
    return sol;
  }

  ConstraintReport node_report(const TrajectorySolution& sol) const {
    ConstraintReport rep;
    for (const auto& seg : sol.segments) {
      for (const auto& nb : nodes_) {
        JointState q{};
        for (std::size_t j = 0; j < 4; ++j) {
          for (std::size_t d = 0; d < kJointDim; ++d) q[d] += nb.b[j] * seg.control_points[j][d];
        }
        update_report(rep, q, p_.anchors, p_.r_collision, cfg_);
      }
    }
    return rep;
  }

 private:
  const TransportProblem& p_;
  const PlannerConfig& cfg_;
  std::size_t m_;
  double h_;
  std::vector<NodeBasis> nodes_;
};

}  // namespace

TransportProblem make_transport_problem(const Scenario& scenario, const GraspConfiguration& center,
                                        const GraspConfiguration& context, const RegionSequence& regions,
                                        const PlannerConfig& cfg) {
  if (regions.size() == 0 || regions.object_regions.size() != regions.size()) {
    throw ValidationError("region sequence is empty or inconsistent");
  }
  TransportProblem p;
  const GraspConfiguration* gs[2] = {&center, &context};
  for (std::size_t i = 0; i < 2; ++i) {
    p.anchors[i] = grasp_anchors(scenario.object, scenario.start_pose, *gs[i]);
    p.r_collision[i] = collision_radius(scenario, *gs[i], cfg);
    p.start[2 * i] = gs[i]->base.x;
    p.start[2 * i + 1] = gs[i]->base.y;
    const Vec2 gb = rotate(p.anchors[i].base, regions.goal_yaw) + scenario.goal_pose.position;
    p.goal[2 * i] = gb.x;
    p.goal[2 * i + 1] = gb.y;
  }
  p.start[4] = scenario.start_pose.position.x;
  p.start[5] = scenario.start_pose.position.y;
  p.start[6] = regions.start_yaw;
  p.goal[4] = scenario.goal_pose.position.x;
  p.goal[5] = scenario.goal_pose.position.y;
  p.goal[6] = regions.goal_yaw;
  for (std::size_t k = 0; k < regions.size(); ++k) {
    p.robot_boxes.push_back(require_box(regions.robot_regions[k]));
    p.object_boxes.push_back(require_box(regions.object_regions[k]));
    p.seed_positions.push_back(regions.seeds.at(k).position);
    p.seed_yaws.push_back(k < regions.seed_yaws.size() ? regions.seed_yaws[k] : regions.seeds[k].yaw);
  }
  return p;
}

ObjectiveTerms evaluate_objective_terms(const TrajectorySolution& traj, const std::array<GraspAnchors, 2>& anchors,
                                        const PlannerConfig& cfg) {
  if (traj.segments.empty()) throw ValidationError("trajectory has no segments");
  Controls cp;
  for (const auto& s : traj.segments) cp.push_back(s.control_points);
  ObjectiveTerms terms;
  accumulate(cp, traj.duration / static_cast<double>(cp.size()), basis_table(cfg.quadrature_points_per_segment),
             anchors, cfg, nullptr, nullptr, &terms, nullptr);
  return terms;
}

double evaluate_objective(const TrajectorySolution& traj, const std::array<GraspAnchors, 2>& anchors,
                          const PlannerConfig& cfg) {
  return evaluate_objective_terms(traj, anchors, cfg).total;
}

ObjectiveGradient objective_gradient(const TrajectorySolution& traj, const std::array<GraspAnchors, 2>& anchors,
                                     const PlannerConfig& cfg) {
  if (traj.segments.empty()) throw ValidationError("trajectory has no segments");
  Controls cp;
  for (const auto& s : traj.segments) cp.push_back(s.control_points);
  ObjectiveGradient out;
  out.value = accumulate(cp, traj.duration / static_cast<double>(cp.size()),
                         basis_table(cfg.quadrature_points_per_segment), anchors, cfg, nullptr, &out.gradient,
                         nullptr, nullptr);
  return out;
}

ConstraintReport check_constraints(const TrajectorySolution& traj, const TransportProblem& problem,
                                   const PlannerConfig& cfg, std::size_t samples) {
  if (samples < 2) throw ValidationError("need at least two samples");
  ConstraintReport rep;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = traj.duration * static_cast<double>(i) / static_cast<double>(samples - 1);
    update_report(rep, traj.eval(t), problem.anchors, problem.r_collision, cfg);
  }
  return rep;
}

double region_violation(const TrajectorySolution& traj, const TransportProblem& problem) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& seg : traj.segments) {
    const auto& rb = problem.robot_boxes.at(seg.region_index);
    const auto& ob = problem.object_boxes.at(seg.region_index);
    for (const auto& c : seg.control_points) {
      for (std::size_t d = 0; d < kJointDim; ++d) {
        const double lo = d < 4 ? rb.lo[d % 2] : ob.lo[d - 4];
        const double hi = d < 4 ? rb.hi[d % 2] : ob.hi[d - 4];
        worst = std::max({worst, lo - c[d], c[d] - hi});
      }
    }
  }
  return worst;
}

std::pair<double, double> junction_continuity_error(const TrajectorySolution& traj) {
  double pos = 0.0, vel = 0.0;
  const double h = traj.duration / static_cast<double>(std::max<std::size_t>(1, traj.segments.size()));
  for (std::size_t k = 0; k + 1 < traj.segments.size(); ++k) {
    const auto a = bezier_eval(traj.segments[k], 1.0);
    const auto b = bezier_eval(traj.segments[k + 1], 0.0);
    const auto da = bezier_derivative(traj.segments[k], 1.0, 1, h);
    const auto db = bezier_derivative(traj.segments[k + 1], 0.0, 1, h);
    for (std::size_t d = 0; d < kJointDim; ++d) {
      pos = std::max(pos, std::abs(a[d] - b[d]));
      vel = std::max(vel, std::abs(da[d] - db[d]));
    }
  }
  return {pos, vel};
}

TrajectorySolution solve_trajectory(const TransportProblem& problem, const PlannerConfig& cfg) {
  cfg.validate();
  if (problem.robot_boxes.empty() || problem.object_boxes.size() != problem.robot_boxes.size() ||
      problem.seed_positions.size() != problem.robot_boxes.size() ||
      problem.seed_yaws.size() != problem.robot_boxes.size()) {
    throw ValidationError("transport problem has inconsistent region data");
  }
  const TransportSolver solver(problem, cfg);
  if (!solver.endpoints_inside()) {
    FreeVars z(solver.segments() - 1);
    for (std::size_t j = 0; j < z.size(); ++j) z[j].point = z[j].handle = problem.start;
    TrajectorySolution sol = solver.to_solution(z);
    sol.status = "endpoint_outside_region";
    sol.objective_value = evaluate_objective(sol, problem.anchors, cfg);
    return sol;
  }

  FreeVars z = solver.initial_guess();
  double best_violation = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  std::string status = "max_outer_iterations";
  double mu = cfg.initial_penalty;
  for (std::size_t outer = 0; outer < cfg.max_outer_iterations; ++outer, mu *= cfg.penalty_growth) {
    FreeVars candidate = solver.minimize(z, mu);
    const double v = solver.violation(candidate);
    if (v <= best_violation) {
      z = std::move(candidate);
      best_violation = v;
    }
    history.push_back(best_violation);
    if (best_violation == 0.0) {
      status = "converged";
      break;
    }
    if (history.size() >= 2 && best_violation > 0.99 * history[history.size() - 2]) {
      status = "stalled";
      break;
    }
  }

  TrajectorySolution sol = solver.to_solution(z);
  sol.violation_history = std::move(history);
  sol.status = status;
  sol.objective_value = evaluate_objective(sol, problem.anchors, cfg);
  sol.quadrature_violation = solver.node_report(sol);
  sol.dense_violation = check_constraints(sol, problem, cfg, cfg.verification_samples);
  const double tol = cfg.constraint_tolerance;
  sol.feasible = sol.quadrature_violation.worst() <= tol &&
                 sol.dense_violation.worst() <= 2.0 * tol && region_violation(sol, problem) <= 1e-9;
  return sol;
}

TrajectorySolution solve_trajectory(const Scenario& scenario, const GraspConfiguration& center,
                                    const GraspConfiguration& context, const RegionSequence& regions,
                                    const PlannerConfig& cfg) {
  return solve_trajectory(make_transport_problem(scenario, center, context, regions, cfg), cfg);
}

int feasibility(const Scenario& scenario, const GraspConfiguration& center, const GraspConfiguration& context,
                const RegionSequence& regions, const PlannerConfig& cfg) {
  return solve_trajectory(scenario, center, context, regions, cfg).feasible ? 1 : 0;
}

}  // namespace cograsp
