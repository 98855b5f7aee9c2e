#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cograsp/errors.hpp"
#include "cograsp/feasibility_dataset.hpp"
#include "cograsp/scenario_generator.hpp"
#include "cograsp/scenario_io.hpp"

using namespace cograsp;

namespace {

constexpr double kPi = std::numbers::pi;

GeneratorConfig small_config(const std::string& shape) {
  GeneratorConfig cfg;
  cfg.shape = shape;
  cfg.sampling.samples_per_grasp_point = 6;
  return cfg;
}

}  // namespace

TEST(ShapeLibrary, AllShapesValid) {
  for (const auto& name : shape_names()) {
    const ObjectShape s = shape_library(name);
    EXPECT_NO_THROW(s.validate()) << name;
    EXPECT_FALSE(s.grasp_points.empty()) << name;
  }
  EXPECT_THROW(shape_library("sphere"), ValidationError);
}

TEST(NarrowestYaw, MatchesRotatedBar) {
  EXPECT_DOUBLE_EQ(narrowest_yaw(shape_library("bar")), 0.0);
  // A bar pre-rotated by 30 degrees is narrowest after a further 150 degrees.
  ObjectShape s = shape_library("bar");
  for (auto& v : s.vertices) v = rotate(v, kPi / 6.0);
  EXPECT_NEAR(narrowest_yaw(s), 5.0 * kPi / 6.0, 1e-12);
}

TEST(GenerateScenarios, OrientationSweepDiffersOnlyInStartYaw) {
  const auto cfg = small_config("bar");
  const auto scs = generate_scenarios(24, cfg, 9);
  ASSERT_EQ(scs.size(), 24u);
  for (std::size_t k = 0; k < scs.size(); ++k) {
    const Scenario& s = scs[k];
    EXPECT_EQ(s.map, scs[0].map);
    EXPECT_EQ(s.object, scs[0].object);
    EXPECT_EQ(s.start_pose.position, scs[0].start_pose.position);
    EXPECT_EQ(s.goal_pose.position, scs[0].goal_pose.position);
    EXPECT_NEAR(s.start_pose.yaw, -kPi + 2.0 * kPi * static_cast<double>(k) / 24.0, 1e-12);
    EXPECT_EQ(s.meta.at("orientation"), std::to_string(k));
    EXPECT_EQ(s.seeds.front(), s.start_pose);
    EXPECT_EQ(s.seeds.back(), s.goal_pose);
    EXPECT_NO_THROW(s.validate());
    // Corridor from the stored seeds is a valid chain.
    EXPECT_NO_THROW(scenario_regions(s)) << "orientation " << k;
  }
  // The goal is the right room's center.
  EXPECT_NEAR(scs[0].goal_pose.position.x, 0.5 * (cfg.wall_x + cfg.wall_thickness + cfg.map_width), 1e-12);
  EXPECT_NEAR(scs[0].goal_pose.position.y, 0.5 * cfg.map_height, 1e-12);
}

TEST(GenerateScenarios, SameSeedIsByteIdentical) {
  const auto cfg = small_config("rectangle");
  const auto a = generate_scenarios(3, cfg, 4);
  const auto b = generate_scenarios(3, cfg, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(dump_json(scenario_to_json(a[i])), dump_json(scenario_to_json(b[i])));
  }
  EXPECT_NE(generate_scenarios(1, cfg, 5)[0].map, a[0].map);
}

TEST(GenerateScenarios, PassageNarrowerThanObjectStillGenerates) {
  auto cfg = small_config("bar");
  cfg.passage_width = 0.15;  // bar is 0.2 wide
  const auto scs = generate_scenarios(2, cfg, 1);
  ASSERT_EQ(scs.size(), 2u);
  for (const auto& s : scs) {
    const LabeledScenario ls = label_scenario(s, LabelConfig{}, nullptr, [](const std::string&) {});
    for (const auto& dc : ls.dc_sets) EXPECT_TRUE(dc.empty());
  }
}

TEST(GenerateScenarios, EveryShapeAndLayoutsBeyondOne) {
  for (const auto& name : shape_names()) {
    auto cfg = small_config(name);
    cfg.orientations = 2;
    const auto scs = generate_scenarios(3, cfg, 2);
    ASSERT_EQ(scs.size(), 3u) << name;
    EXPECT_EQ(scs[2].meta.at("layout"), "1");
    EXPECT_EQ(scs[2].meta.at("shape"), name);
  }
}

TEST(GeneratorConfig, Validation) {
  GeneratorConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.orientations = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.min_tables = 3;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.wall_x = 6.8;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.shape = "blob";
  EXPECT_THROW(generate_scenarios(1, cfg, 0), ValidationError);
}

TEST(GenerateScenarios, ImpossibleRoomThrowsGenerationFailed) {
  GeneratorConfig cfg;
  cfg.map_height = 1.0;  // object margin does not fit
  cfg.passage_width = 0.5;
  cfg.max_attempts = 3;
  EXPECT_THROW(generate_scenarios(1, cfg, 0), GenerationFailed);
}
