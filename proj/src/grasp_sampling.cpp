#include "cograsp/grasp_sampling.hpp"

#include <cmath>
#include <numbers>

#include "cograsp/errors.hpp"

namespace cograsp {

void SamplingConfig::validate() const {
  if (!(sample_radius > 0.0)) throw ValidationError("sample_radius must be > 0");
  if (r_min > sample_radius || sample_radius > r_max) throw ValidationError("sample_radius must lie in [r_min, r_max]");
  if (samples_per_grasp_point < 1) throw ValidationError("samples_per_grasp_point must be >= 1");
  if (base_footprint_radius < 0.0) throw ValidationError("base_footprint_radius must be >= 0");
}

std::vector<Vec2> sample_circle(const Vec2& center, double radius, std::size_t n) {
  if (!(radius > 0.0) || n < 1) throw ValidationError("sample_circle needs radius > 0 and n >= 1");
  std::vector<Vec2> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    out.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  return out;
}

bool base_disc_clear(const OccupancyMap& map, const ObjectShape& object, const Pose2& object_pose,
                     const Vec2& center, double radius, double spacing) {
  if (spacing <= 0.0) spacing = 0.5 * map.resolution();
  const auto poly = posed_vertices(object, object_pose);
  auto clear = [&](const Vec2& p) { return point_in_free_space(map, p) && !point_in_polygon(poly, p); };
  if (!clear(center)) return false;
  const auto rings = static_cast<std::size_t>(std::ceil(radius / spacing));
  for (std::size_t k = 1; k <= rings; ++k) {
    const double r = radius * static_cast<double>(k) / static_cast<double>(rings);
    const auto n = static_cast<std::size_t>(std::max(6.0, std::ceil(2.0 * std::numbers::pi * r / spacing)));
    for (std::size_t i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
      if (!clear({center.x + r * std::cos(a), center.y + r * std::sin(a)})) return false;
    }
  }
  return true;
}

std::vector<GraspConfiguration> build_grasp_set(const Scenario& scenario, const SamplingConfig& cfg) {
  cfg.validate();
  std::vector<GraspConfiguration> out;
  const auto& points = scenario.object.grasp_points;
  for (std::size_t gi = 0; gi < points.size(); ++gi) {
    const Vec2 grasp = transform_point(scenario.start_pose, points[gi]);
    for (const Vec2& base : sample_circle(grasp, cfg.sample_radius, cfg.samples_per_grasp_point)) {
      if (!point_in_free_space(scenario.map, base)) continue;
      if (!base_disc_clear(scenario.map, scenario.object, scenario.start_pose, base, cfg.base_footprint_radius)) {
        continue;
      }
      // The arm corridor is checked against the map only; the gripper touches the object.
      if (!segment_clear(scenario.map, base, grasp)) continue;
      out.push_back({base, grasp, gi});
    }
  }
  if (out.empty()) throw EmptyGraspSet();
  return out;
}

}  // namespace cograsp
