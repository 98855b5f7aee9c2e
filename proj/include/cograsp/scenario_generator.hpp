#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cograsp/grasp_sampling.hpp"
#include "cograsp/scenario.hpp"

namespace cograsp {

/// Layout template: two rooms split by a wall at x = wall_x with one passage,
/// the object and a few tables in the left room, the goal at the right room's
/// center.
struct GeneratorConfig {
  std::string shape = "bar";
  std::size_t orientations = 24;
  double map_width = 7.0;
  double map_height = 4.0;
  double resolution = 0.05;
  double wall_x = 3.5;
  double wall_thickness = 0.5;
  double passage_width = 0.65;
  std::size_t min_tables = 0;
  std::size_t max_tables = 2;
  double table_min_side = 0.4;
  double table_max_side = 0.8;
  std::size_t max_attempts = 100;
  SamplingConfig sampling;

  void validate() const;
};

/// bar, rectangle, t, triangle, asymmetric.
std::vector<std::string> shape_names();
ObjectShape shape_library(const std::string& name);

/// Yaw in [0, pi) that minimizes the object's extent across the x axis.
double narrowest_yaw(const ObjectShape& shape);

/// `count` scenarios. Scenario i uses layout i / orientations and start yaw
/// -pi + 2 pi (i % orientations) / orientations; scenarios of one layout share
/// map, object position and goal. Throws GenerationFailed when no valid layout
/// is found within max_attempts.
std::vector<Scenario> generate_scenarios(std::size_t count, const GeneratorConfig& cfg, std::uint64_t seed);

}  // namespace cograsp
