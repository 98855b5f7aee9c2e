#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cograsp/corridor_planner.hpp"
#include "cograsp/ranking.hpp"
#include "cograsp/scenario.hpp"

namespace cograsp {

/// A planned trajectory together with the grasp pair it was planned for.
struct PlannedPair {
  PairIndex pair;
  TrajectorySolution trajectory;
};

/// {"center", "context", "feasible", "status", "duration", "objective",
///  "segments": [{"region", "control_points": [[7 numbers] x 4]}]}
nlohmann::json planned_pair_to_json(const PlannedPair& p);
/// Throws ValidationError on malformed input.
PlannedPair planned_pair_from_json(const nlohmann::json& j);

struct RenderOptions {
  double pixels_per_meter = 100.0;
  std::size_t samples_per_segment = 100;
  /// Pair to highlight when no trajectory is given.
  std::optional<PairIndex> highlight;
};

/// Obstacles, object at start and goal, grasp candidates, the highlighted
/// pair, and (when given) robot and object paths.
std::string render_svg(const Scenario& scenario, const PlannedPair* planned, const RenderOptions& opts = {});

}  // namespace cograsp
