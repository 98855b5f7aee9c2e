#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cograsp/scenario.hpp"

namespace cograsp {

/// Joint configuration: robot 1 (x, y), robot 2 (x, y), object (x, y, yaw).
inline constexpr std::size_t kJointDim = 7;
using JointState = std::array<double, kJointDim>;

namespace joint {
inline constexpr std::size_t kRobot1X = 0;
inline constexpr std::size_t kRobot1Y = 1;
inline constexpr std::size_t kRobot2X = 2;
inline constexpr std::size_t kRobot2Y = 3;
inline constexpr std::size_t kObjectX = 4;
inline constexpr std::size_t kObjectY = 5;
inline constexpr std::size_t kObjectYaw = 6;
}  // namespace joint

struct Halfspace {
  std::vector<double> normal;  // unit length
  double offset = 0.0;         // normal . x <= offset
};

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
};

/// Convex polytope {x : n_i . x <= b_i}.
class ConvexRegion {
 public:
  ConvexRegion() = default;
  ConvexRegion(std::size_t dim, std::vector<Halfspace> halfspaces);
  static ConvexRegion box(std::span<const double> lo, std::span<const double> hi);

  std::size_t dim() const { return dim_; }
  const std::vector<Halfspace>& halfspaces() const { return halfspaces_; }

  /// Largest n . x - b over all halfspaces (<= 0 inside).
  double max_violation(std::span<const double> x) const;
  bool contains(std::span<const double> x, double tol = 1e-9) const { return max_violation(x) <= tol; }
  /// Bounds when every normal is +-e_i and each axis is bounded on both sides.
  std::optional<Box> as_box() const;

 private:
  std::size_t dim_ = 0;
  std::vector<Halfspace> halfspaces_;
};

/// Box intersection; throws ValidationError for non-box regions.
bool regions_intersect(const ConvexRegion& a, const ConvexRegion& b);

struct RegionSequence {
  std::vector<ConvexRegion> robot_regions;   // dim 2
  std::vector<ConvexRegion> object_regions;  // dim 3 (x, y, yaw)
  std::vector<Pose2> seeds;
  /// Seed yaws unwrapped along the chain; region yaw bounds use these values.
  std::vector<double> seed_yaws;
  double start_yaw = 0.0;  // start yaw (wrapped, as given)
  double goal_yaw = 0.0;   // goal yaw unwrapped next to the last seed

  std::size_t size() const { return robot_regions.size(); }
};

struct BezierSegment {
  std::array<JointState, 4> control_points{};
  std::size_t region_index = 0;
};

/// Cubic Bernstein combination at s in [0, 1].
JointState bezier_eval(const BezierSegment& seg, double s);
/// d^order/dt^order with the segment spanning `span` seconds (order 1 or 2).
JointState bezier_derivative(const BezierSegment& seg, double s, int order, double span);

struct GrowConfig {
  double max_yaw_half_range = 1.5707963267948966;  // pi/2
  double yaw_step = 0.08726646259971647;           // pi/36
};

/// Greedy axis-aligned box grown from `seed`: faces +x, -x, +y, -y (and
/// +yaw, -yaw for 3-D seeds) are pushed in turn by one step (map resolution,
/// or yaw_step) while the box stays collision-free. 2-D boxes must be free of
/// obstacle cells; 3-D boxes keep `object` collision-free at every grid pose
/// inside them. Throws SeedInCollision.
ConvexRegion grow_convex_region(const OccupancyMap& map, std::span<const double> seed,
                                const ObjectShape* object = nullptr, const GrowConfig& cfg = {});

/// One robot region and one object region per seed. Throws BrokenChain when
/// consecutive regions fail to intersect and UncoveredEndpoint when the first
/// (last) object region misses the start (goal) pose.
RegionSequence build_region_sequence(const OccupancyMap& map, const Pose2& start, const Pose2& goal,
                                     std::span<const Pose2> seeds, const ObjectShape& object,
                                     const GrowConfig& cfg = {});

/// Grasp point and base position of a configuration in the object frame at
/// the start pose.
struct GraspAnchors {
  Vec2 grasp;
  Vec2 base;
};

GraspAnchors grasp_anchors(const ObjectShape& object, const Pose2& start_pose, const GraspConfiguration& g);

struct PlannerConfig {
  double w_F = 20.0;
  double r_min = 0.35;
  double r_max = 0.7;
  /// Overrides the per-configuration clearance rule when set.
  std::optional<double> r_collision;
  double base_footprint_radius = 0.30;
  double min_collision_radius = 0.05;
  std::size_t quadrature_points_per_segment = 16;
  double constraint_tolerance = 1e-6;
  /// Inner solves enforce the nonlinear constraints tightened by this margin.
  double constraint_margin = 1e-3;
  std::size_t max_outer_iterations = 6;
  std::size_t max_inner_iterations = 200;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double duration = 10.0;
  /// Smoothing of |q'| inside the length term.
  double length_epsilon = 1e-4;
  /// Samples over [0, T] used for the post-solve constraint check.
  std::size_t verification_samples = 1001;

  void validate() const;
};

/// r_collision for one configuration: clearance between the base disc and the
/// object boundary at the start pose minus one map resolution, floored at
/// `min_collision_radius` (or the configured override).
double collision_radius(const Scenario& scenario, const GraspConfiguration& g, const PlannerConfig& cfg);

/// Everything the optimizer needs for one grasp pair.
struct TransportProblem {
  JointState start{};
  JointState goal{};
  std::array<GraspAnchors, 2> anchors{};
  std::array<double, 2> r_collision{};
  std::vector<Box> robot_boxes;   // one per region, dim 2
  std::vector<Box> object_boxes;  // one per region, dim 3
  std::vector<double> seed_yaws;
  std::vector<Vec2> seed_positions;
};

TransportProblem make_transport_problem(const Scenario& scenario, const GraspConfiguration& center,
                                        const GraspConfiguration& context, const RegionSequence& regions,
                                        const PlannerConfig& cfg);

/// Largest violation of each nonlinear constraint family (<= 0 means satisfied).
struct ConstraintReport {
  double annulus_min = -1e300;  // r_min - |x_r - P x_g|
  double annulus_max = -1e300;  // |x_r - P x_g| - r_max
  double formation = -1e300;    // |x_r - P x_r| - r_collision
  double worst() const;
};

struct TrajectorySolution {
  std::vector<BezierSegment> segments;
  double duration = 0.0;
  double objective_value = 0.0;
  bool feasible = false;
  ConstraintReport quadrature_violation;
  ConstraintReport dense_violation;
  /// Summed tightened-constraint violation after each outer iteration.
  std::vector<double> violation_history;
  std::string status;

  std::size_t segment_count() const { return segments.size(); }
  /// Segment index and local parameter for time t in [0, duration].
  std::pair<std::size_t, double> locate(double t) const;
  JointState eval(double t) const;
};

struct ObjectiveTerms {
  double length = 0.0;
  double velocity = 0.0;
  double smoothness = 0.0;
  double formation = 0.0;
  double total = 0.0;  // L + V + S + w_F F
};

ObjectiveTerms evaluate_objective_terms(const TrajectorySolution& traj, const std::array<GraspAnchors, 2>& anchors,
                                        const PlannerConfig& cfg);
double evaluate_objective(const TrajectorySolution& traj, const std::array<GraspAnchors, 2>& anchors,
                          const PlannerConfig& cfg);

/// Objective and its gradient with every control point treated as free.
struct ObjectiveGradient {
  double value = 0.0;
  std::vector<std::array<JointState, 4>> gradient;
};
ObjectiveGradient objective_gradient(const TrajectorySolution& traj, const std::array<GraspAnchors, 2>& anchors,
                                     const PlannerConfig& cfg);

/// Constraint values at `samples` uniformly spaced times t_i = T i / (samples - 1).
ConstraintReport check_constraints(const TrajectorySolution& traj, const TransportProblem& problem,
                                   const PlannerConfig& cfg, std::size_t samples);

/// Largest halfspace violation of any control point against its region.
double region_violation(const TrajectorySolution& traj, const TransportProblem& problem);

/// Largest junction mismatch in position and in first derivative.
std::pair<double, double> junction_continuity_error(const TrajectorySolution& traj);

TrajectorySolution solve_trajectory(const TransportProblem& problem, const PlannerConfig& cfg);
TrajectorySolution solve_trajectory(const Scenario& scenario, const GraspConfiguration& center,
                                    const GraspConfiguration& context, const RegionSequence& regions,
                                    const PlannerConfig& cfg);

/// Binary feasibility metric: 1 iff solve_trajectory reports a feasible plan.
int feasibility(const Scenario& scenario, const GraspConfiguration& center, const GraspConfiguration& context,
                const RegionSequence& regions, const PlannerConfig& cfg);

}  // namespace cograsp
