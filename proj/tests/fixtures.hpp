#pragma once

// Hand-built transport scenarios shared by the dataset tests and the
// acceptance run. Every map is 8 x 3 m at 0.05 m with the object travelling
// along +x from (1.5, 1.5) to (6.5, 1.5).

#include <string>
#include <vector>

#include "cograsp/scenario.hpp"

namespace cograsp::fixtures {

inline ObjectShape bar(double length = 1.0, double width = 0.2) {
  ObjectShape s;
  const double hx = 0.5 * length;
  const double hy = 0.5 * width;
  s.vertices = {{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}};
  s.grasp_points = {{-hx, 0.0}, {hx, 0.0}, {0.0, hy}, {0.0, -hy}};
  return s;
}

// Walls above and below y in [1.5 - gap/2, 1.5 + gap/2] for x in [3, 5].
inline OccupancyMap corridor_map(double gap) {
  OccupancyMap map(160, 60, 0.05);
  map.fill_rect({3.0, 0.0}, {5.0, 1.5 - 0.5 * gap}, Cell::Obstacle);
  map.fill_rect({3.0, 1.5 + 0.5 * gap}, {5.0, 3.0}, Cell::Obstacle);
  return map;
}

inline Scenario corridor_scenario(double gap, const ObjectShape& object, double start_yaw = 0.0) {
  Scenario sc;
  sc.map = corridor_map(gap);
  sc.object = object;
  sc.start_pose = Pose2({1.5, 1.5}, start_yaw);
  sc.goal_pose = Pose2({6.5, 1.5}, 0.0);
  sc.seeds = {sc.start_pose, Pose2({1.5, 1.5}, 0.0), Pose2({3.25, 1.5}, 0.0), Pose2({4.0, 1.5}, 0.0),
              Pose2({4.75, 1.5}, 0.0), sc.goal_pose};
  return sc;
}

// Grasp configuration for grasp point `gi` with the base offset by `offset`
// from the grasp point, both in the object frame at the start pose.
inline GraspConfiguration config(const Scenario& sc, std::size_t gi, const Vec2& offset) {
  const Vec2 g = sc.object.grasp_points.at(gi);
  return {transform_point(sc.start_pose, g + offset), transform_point(sc.start_pose, g), gi};
}

struct Named {
  std::string name;
  Scenario scenario;
};

// m = 3: two end grasps in line with the bar and one side grasp whose base
// cannot fit through a 0.45 m corridor.
inline Scenario three_config() {
  Scenario sc = corridor_scenario(0.45, bar());
  sc.grasp_set = {config(sc, 0, {-0.45, 0.0}), config(sc, 1, {0.45, 0.0}), config(sc, 2, {0.0, 0.5})};
  return sc;
}

// m = 6 mixing in-line, slightly offset and side bases.
inline Scenario six_config() {
  Scenario sc = corridor_scenario(0.45, bar());
  sc.grasp_set = {config(sc, 0, {-0.45, 0.0}),  config(sc, 0, {-0.4, 0.2}), config(sc, 1, {0.45, 0.0}),
                  config(sc, 1, {0.4, -0.2}), config(sc, 2, {0.0, 0.5}),  config(sc, 3, {0.0, -0.5})};
  return sc;
}

// Open map (wide corridor) where side grasps also pass.
inline Scenario open_four() {
  Scenario sc = corridor_scenario(2.4, bar());
  sc.grasp_set = {config(sc, 0, {-0.45, 0.0}), config(sc, 1, {0.45, 0.0}), config(sc, 2, {0.0, 0.5}),
                  config(sc, 3, {0.0, -0.5})};
  return sc;
}

// Object starts rotated by a quarter turn and must swing into line first.
inline Scenario rotated_start() {
  Scenario sc = corridor_scenario(0.9, bar(), 1.5707963267948966);
  sc.grasp_set = {config(sc, 0, {-0.45, 0.0}), config(sc, 1, {0.45, 0.0}), config(sc, 2, {0.0, 0.5}),
                  config(sc, 3, {0.0, -0.5}), config(sc, 1, {0.35, 0.25})};
  return sc;
}

// Wider object with a table next to the start position.
inline Scenario table_and_rectangle() {
  ObjectShape rect = bar(0.8, 0.4);
  Scenario sc = corridor_scenario(0.9, rect);
  sc.map.fill_rect({1.0, 2.45}, {2.0, 3.0}, Cell::Obstacle);
  sc.grasp_set = {config(sc, 0, {-0.45, 0.0}), config(sc, 1, {0.45, 0.0}), config(sc, 3, {0.0, -0.5}),
                  config(sc, 0, {-0.4, -0.2}), config(sc, 1, {0.4, 0.2}),  config(sc, 3, {0.25, -0.45})};
  return sc;
}

// Passage narrower than the object's smallest width: nothing can pass.
inline Scenario impossible_passage() {
  Scenario sc = corridor_scenario(0.15, bar());
  sc.grasp_set = {config(sc, 0, {-0.45, 0.0}), config(sc, 1, {0.45, 0.0}), config(sc, 2, {0.0, 0.5}),
                  config(sc, 3, {0.0, -0.5})};
  return sc;
}

inline std::vector<Named> hand_built() {
  return {{"three_config", three_config()},
          {"six_config", six_config()},
          {"open_four", open_four()},
          {"rotated_start", rotated_start()},
          {"table_and_rectangle", table_and_rectangle()}};
}

}  // namespace cograsp::fixtures
