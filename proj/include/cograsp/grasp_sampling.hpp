#pragma once

#include <cstddef>
#include <vector>

#include "cograsp/scenario.hpp"

namespace cograsp {

struct SamplingConfig {
  double sample_radius = 0.55;
  std::size_t samples_per_grasp_point = 60;
  double r_min = 0.35;
  double r_max = 0.7;
  double base_footprint_radius = 0.30;

  void validate() const;
};

/// n points at angles 2*pi*i/n from +x, on the circle of `radius` about `center`.
std::vector<Vec2> sample_circle(const Vec2& center, double radius, std::size_t n);

/// Disc of `radius` about `center` is clear of map obstacles and of the object
/// polygon posed at `object_pose`, checked on concentric rings at spacing
/// `spacing` (defaults to resolution/2).
bool base_disc_clear(const OccupancyMap& map, const ObjectShape& object, const Pose2& object_pose,
                     const Vec2& center, double radius, double spacing = 0.0);

/// All candidate base placements surviving the disc, arm-corridor and
/// free-space filters, ordered by (grasp_index, angle index).
/// Throws EmptyGraspSet when nothing survives.
std::vector<GraspConfiguration> build_grasp_set(const Scenario& scenario, const SamplingConfig& cfg);

}  // namespace cograsp
