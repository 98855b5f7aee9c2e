#include "cograsp/scenario_generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cograsp/corridor_planner.hpp"
#include "cograsp/errors.hpp"
#include "cograsp/random.hpp"

namespace cograsp {

void GeneratorConfig::validate() const {
  if (orientations < 1) throw ValidationError("orientations must be >= 1");
  if (!(resolution > 0.0)) throw ValidationError("resolution must be > 0");
  if (!(map_width > 0.0 && map_height > 0.0)) throw ValidationError("map size must be positive");
  if (!(wall_x > 0.0 && wall_x + wall_thickness < map_width)) throw ValidationError("wall must lie inside the map");
  if (!(wall_thickness > 0.0)) throw ValidationError("wall_thickness must be > 0");
  if (!(passage_width > 0.0 && passage_width < map_height)) throw ValidationError("passage_width out of range");
  if (min_tables > max_tables) throw ValidationError("min_tables exceeds max_tables");
  if (!(table_min_side > 0.0 && table_min_side <= table_max_side)) throw ValidationError("bad table sizes");
  if (max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  shape_library(shape);
  sampling.validate();
}

std::vector<std::string> shape_names() { return {"bar", "rectangle", "t", "triangle", "asymmetric"}; }

ObjectShape shape_library(const std::string& name) {
  ObjectShape s;
  if (name == "bar") {
    s.vertices = {{-0.6, -0.1}, {0.6, -0.1}, {0.6, 0.1}, {-0.6, 0.1}};
    s.grasp_points = {{0.6, 0.0}, {-0.6, 0.0}, {0.3, 0.1}, {-0.3, 0.1}, {0.3, -0.1}, {-0.3, -0.1}};
  } else if (name == "rectangle") {
    s.vertices = {{-0.45, -0.2}, {0.45, -0.2}, {0.45, 0.2}, {-0.45, 0.2}};
    s.grasp_points = {{0.45, 0.0}, {-0.45, 0.0}, {0.0, 0.2}, {0.0, -0.2}, {0.25, 0.2}, {-0.25, -0.2}};
  } else if (name == "t") {
    s.vertices = {{-0.1, -0.5}, {0.1, -0.5}, {0.1, 0.1}, {0.4, 0.1}, {0.4, 0.3}, {-0.4, 0.3}, {-0.4, 0.1}, {-0.1, 0.1}};
    s.grasp_points = {{0.0, -0.5}, {0.4, 0.2}, {-0.4, 0.2}, {0.0, 0.3}};
  } else if (name == "triangle") {
    s.vertices = {{-0.5, -0.3}, {0.5, -0.3}, {0.0, 0.4}};
    s.grasp_points = {{0.0, -0.3}, {0.25, 0.05}, {-0.25, 0.05}};
  } else if (name == "asymmetric") {
    s.vertices = {{-0.5, -0.15}, {0.5, -0.15}, {0.5, 0.35}, {0.25, 0.35}, {0.25, 0.05}, {-0.5, 0.05}};
    s.grasp_points = {{-0.5, -0.05}, {0.5, 0.1}, {0.0, -0.15}, {0.375, 0.35}};
  } else {
    throw ValidationError("unknown object shape '" + name + "'");
  }
  return canonical_vertex_order(s);
}

namespace {

struct Extent {
  double lo_x, hi_x, lo_y, hi_y;
};

Extent rotated_extent(const ObjectShape& shape, double yaw) {
  Extent e{1e300, -1e300, 1e300, -1e300};
  for (const auto& v : shape.vertices) {
    const Vec2 p = rotate(v, yaw);
    e.lo_x = std::min(e.lo_x, p.x);
    e.hi_x = std::max(e.hi_x, p.x);
    e.lo_y = std::min(e.lo_y, p.y);
    e.hi_y = std::max(e.hi_y, p.y);
  }
  return e;
}

double circumradius(const ObjectShape& shape) {
  double r = 0.0;
  for (const auto& v : shape.vertices) r = std::max(r, v.norm());
  return r;
}

double rect_circle_distance(const Vec2& lo, const Vec2& hi, const Vec2& c) {
  const double dx = std::max({lo.x - c.x, 0.0, c.x - hi.x});
  const double dy = std::max({lo.y - c.y, 0.0, c.y - hi.y});
  return std::hypot(dx, dy);
}

bool rects_overlap(const Vec2& alo, const Vec2& ahi, const Vec2& blo, const Vec2& bhi) {
  return alo.x < bhi.x && blo.x < ahi.x && alo.y < bhi.y && blo.y < ahi.y;
}

double start_yaw(std::size_t k, std::size_t orientations) {
  return -std::numbers::pi + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(orientations);
}

constexpr double kPassageSeedSpacing = 0.25;

struct Layout {
  OccupancyMap map{1, 1, 0.05};
  Vec2 object_position;
  double passage_y = 0.0;
  std::size_t tables = 0;
};

Layout try_layout(const GeneratorConfig& cfg, const ObjectShape& shape, Rng& rng) {
  const double res = cfg.resolution;
  const auto wc = static_cast<std::size_t>(std::lround(cfg.map_width / res));
  const auto hc = static_cast<std::size_t>(std::lround(cfg.map_height / res));
  Layout lay;
  lay.map = OccupancyMap(wc, hc, res);
  const double height = static_cast<double>(hc) * res;
  lay.map.fill_rect({cfg.wall_x, 0.0}, {cfg.wall_x + cfg.wall_thickness, height}, Cell::Obstacle);

  const double half_gap = 0.5 * cfg.passage_width;
  const double y_lo = 0.5 + half_gap;
  const double y_hi = height - 0.5 - half_gap;
  // Passage centered on a cell center so its width is a whole number of cells.
  const double y_raw = y_lo < y_hi ? rng.uniform(y_lo, y_hi) : 0.5 * height;
  lay.passage_y = (std::floor(y_raw / res) + 0.5) * res;
  lay.map.fill_rect({cfg.wall_x - res, lay.passage_y - half_gap - 1e-9},
                    {cfg.wall_x + cfg.wall_thickness + res, lay.passage_y + half_gap + 1e-9}, Cell::Free);

  const double r = circumradius(shape);
  const double margin = r + 0.35;
  if (cfg.wall_x - 2.0 * margin < 0.0 || height < 2.0 * margin) throw GenerationFailed("room too small for object");
  lay.object_position = {rng.uniform(margin, cfg.wall_x - margin), rng.uniform(margin, height - margin)};

  const std::size_t n_tables = cfg.min_tables + rng.below(cfg.max_tables - cfg.min_tables + 1);
  // Keep clear the object's reach zone and the band leading to the passage.
  const double band = r + 0.45;
  const Vec2 band_lo{lay.object_position.x - band, std::min(lay.object_position.y, lay.passage_y) - band};
  const Vec2 band_hi{cfg.wall_x, std::max(lay.object_position.y, lay.passage_y) + band};
  for (std::size_t t = 0; t < n_tables; ++t) {
    for (int attempt = 0; attempt < 30; ++attempt) {
      const double w = rng.uniform(cfg.table_min_side, cfg.table_max_side);
      const double h = rng.uniform(cfg.table_min_side, cfg.table_max_side);
      if (cfg.wall_x - w - 0.2 <= 0.1 || height - h - 0.1 <= 0.1) break;
      const Vec2 lo{rng.uniform(0.1, cfg.wall_x - w - 0.2), rng.uniform(0.1, height - h - 0.1)};
      const Vec2 hi{lo.x + w, lo.y + h};
      if (rect_circle_distance(lo, hi, lay.object_position) < r + 0.9) continue;
      if (rects_overlap(lo, hi, band_lo, band_hi)) continue;
      lay.map.fill_rect(lo, hi, Cell::Obstacle);
      ++lay.tables;
      break;
    }
  }
  return lay;
}

// Keeps the first seed, then repeatedly jumps to the farthest seed whose
// regions still overlap the current one. A chain that cannot be built is left
// alone; labeling reports it.
std::vector<Pose2> prune_seeds(const Scenario& sc) {
  RegionSequence rs;
  try {
    rs = build_region_sequence(sc.map, sc.start_pose, sc.goal_pose, sc.seeds, sc.object);
  } catch (const Error&) {
    return sc.seeds;
  }
  std::vector<Pose2> kept{sc.seeds.front()};
  std::size_t cur = 0;
  while (cur + 1 < rs.size()) {
    std::size_t next = cur + 1;
    for (std::size_t j = rs.size() - 1; j > cur + 1; --j) {
      if (regions_intersect(rs.robot_regions[cur], rs.robot_regions[j]) &&
          regions_intersect(rs.object_regions[cur], rs.object_regions[j])) {
        next = j;
        break;
      }
    }
    kept.push_back(sc.seeds[next]);
    cur = next;
  }
  return kept;
}

Scenario make_scenario(const Layout& lay, const GeneratorConfig& cfg, const ObjectShape& shape, const std::string& name,
                       std::size_t layout_index, std::size_t k) {
  Scenario sc;
  sc.map = lay.map;
  sc.object = shape;
  const double yaw = start_yaw(k, cfg.orientations);
  sc.start_pose = Pose2(lay.object_position, yaw);

  const double p = narrowest_yaw(shape);
  const double p_flip = wrap_angle(p + std::numbers::pi);
  const double travel_yaw = std::abs(wrap_angle(p - yaw)) <= std::abs(wrap_angle(p_flip - yaw)) ? p : p_flip;
  const double room2_lo = cfg.wall_x + cfg.wall_thickness;
  const double height = static_cast<double>(lay.map.height_cells()) * lay.map.resolution();
  const double width = static_cast<double>(lay.map.width_cells()) * lay.map.resolution();
  const Vec2 goal{0.5 * (room2_lo + width), 0.5 * height};
  sc.goal_pose = Pose2(goal, travel_yaw);

  const Extent e = rotated_extent(shape, travel_yaw);
  // Seeds through the passage are spaced closely enough for consecutive boxes to overlap.
  sc.seeds = {sc.start_pose, Pose2(lay.object_position, travel_yaw)};
  const double x_in = cfg.wall_x - e.hi_x - 0.15;
  const double x_out = room2_lo - e.lo_x + 0.15;
  const auto n_passage = static_cast<std::size_t>(std::ceil((x_out - x_in) / kPassageSeedSpacing));
  for (std::size_t i = 0; i <= n_passage; ++i) {
    const double x = x_in + (x_out - x_in) * static_cast<double>(i) / static_cast<double>(n_passage);
    sc.seeds.emplace_back(x, lay.passage_y, travel_yaw);
  }
  sc.seeds.push_back(sc.goal_pose);
  sc.seeds = prune_seeds(sc);
  sc.meta = {{"shape", name}, {"layout", std::to_string(layout_index)}, {"orientation", std::to_string(k)},
             {"tables", std::to_string(lay.tables)}};
  sc.grasp_set = build_grasp_set(sc, cfg.sampling);
  sc.validate();
  return sc;
}

}  // namespace

double narrowest_yaw(const ObjectShape& shape) {
  constexpr int kSteps = 360;
  double best_yaw = 0.0;
  double best = 1e300;
  for (int i = 0; i < kSteps; ++i) {
    const double yaw = std::numbers::pi * static_cast<double>(i) / kSteps;
    const Extent e = rotated_extent(shape, yaw);
    if (e.hi_y - e.lo_y < best - 1e-12) {
      best = e.hi_y - e.lo_y;
      best_yaw = yaw;
    }
  }
  return best_yaw;
}

std::vector<Scenario> generate_scenarios(std::size_t count, const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const ObjectShape shape = shape_library(cfg.shape);
  const PolygonSampler sampler(shape, cfg.resolution);
  std::vector<Scenario> out;
  const std::size_t layouts = (count + cfg.orientations - 1) / cfg.orientations;
  for (std::size_t l = 0; l < layouts; ++l) {
    const std::size_t n_here = std::min(cfg.orientations, count - l * cfg.orientations);
    std::vector<Scenario> batch;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && batch.empty(); ++attempt) {
      Rng rng(mix_seed(seed, l, attempt));
      const Layout lay = try_layout(cfg, shape, rng);
      bool ok = true;
      for (std::size_t k = 0; k < cfg.orientations && ok; ++k) {
        ok = !sampler.collides(lay.map, Pose2(lay.object_position, start_yaw(k, cfg.orientations)));
      }
      if (!ok) continue;
      try {
        for (std::size_t k = 0; k < n_here; ++k) batch.push_back(make_scenario(lay, cfg, shape, cfg.shape, l, k));
      } catch (const EmptyGraspSet&) {
        batch.clear();
      } catch (const ValidationError&) {
        batch.clear();
      }
    }
    if (batch.empty()) {
      throw GenerationFailed("no valid layout for layout " + std::to_string(l) + " after " +
                             std::to_string(cfg.max_attempts) + " attempts");
    }
    for (auto& s : batch) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cograsp
