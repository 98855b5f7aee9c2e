#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "cograsp/geometry.hpp"

namespace cograsp {

/// One candidate (x_r, y_r, x_g, y_g): a robot base position and the grasp
/// point it reaches, both in the world frame with the object at its start pose.
struct GraspConfiguration {
  Vec2 base;
  Vec2 grasp;
  std::size_t grasp_index = 0;

  bool operator==(const GraspConfiguration&) const = default;
};

/// A transport problem instance: map, object, start/goal poses and the
/// candidate grasp set. `seeds` holds optional corridor seeds for the planner
/// (empty means "derive automatically"); `meta` carries free-form grouping
/// keys such as object or table identifiers.
struct Scenario {
  OccupancyMap map{1, 1, 0.05};
  ObjectShape object;
  Pose2 start_pose;
  Pose2 goal_pose;
  std::vector<GraspConfiguration> grasp_set;
  std::vector<Pose2> seeds;
  std::map<std::string, std::string> meta;

  /// Throws ValidationError if the shape is invalid or the object collides at
  /// its start or goal pose.
  void validate() const;

  bool operator==(const Scenario&) const = default;
};

}  // namespace cograsp
