#include "cograsp/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

#include "cograsp/errors.hpp"

namespace cograsp {

double wrap_angle(double a) {
  if (a >= -std::numbers::pi && a < std::numbers::pi) return a;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 transform_point(const Pose2& pose, const Vec2& p) { return rotate(p, pose.yaw) + pose.position; }

Pose2 inverse(const Pose2& pose) { return Pose2(rotate(-pose.position, -pose.yaw), -pose.yaw); }

OccupancyMap::OccupancyMap(std::size_t width_cells, std::size_t height_cells, double resolution, Vec2 origin,
                           Cell fill)
    : OccupancyMap(width_cells, height_cells, resolution, origin,
                   std::vector<Cell>(width_cells * height_cells, fill)) {}

OccupancyMap::OccupancyMap(std::size_t width_cells, std::size_t height_cells, double resolution, Vec2 origin,
                           std::vector<Cell> cells)
    : width_(width_cells), height_(height_cells), resolution_(resolution), origin_(origin), cells_(std::move(cells)) {
  if (!(resolution_ > 0.0) || !std::isfinite(resolution_)) throw ValidationError("map resolution must be > 0");
  if (width_ == 0 || height_ == 0) throw ValidationError("map must have at least one cell");
  if (cells_.size() != width_ * height_) throw ValidationError("map cell count does not match width x height");
}

void OccupancyMap::fill_rect(const Vec2& lo, const Vec2& hi, Cell c) {
  for (std::size_t iy = 0; iy < height_; ++iy) {
    for (std::size_t ix = 0; ix < width_; ++ix) {
      const Vec2 p = cell_center(ix, iy);
      if (p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y) set(ix, iy, c);
    }
  }
}

bool point_in_free_space(const OccupancyMap& map, const Vec2& p) {
  return !map.is_obstacle(map.cell_x(p.x), map.cell_y(p.y));
}

double polygon_area(std::span<const Vec2> polygon) {
  double a = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    a += polygon[i].cross(polygon[(i + 1) % polygon.size()]);
  }
  return 0.5 * a;
}

bool point_in_polygon(std::span<const Vec2> polygon, const Vec2& p) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + ab * t);
}

double distance_to_boundary(std::span<const Vec2> polygon, const Vec2& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    best = std::min(best, distance_to_segment(p, polygon[i], polygon[(i + 1) % polygon.size()]));
  }
  return best;
}

double distance_to_polygon(std::span<const Vec2> polygon, const Vec2& p) {
  return point_in_polygon(polygon, p) ? 0.0 : distance_to_boundary(polygon, p);
}

namespace {

int orientation(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double v = (b - a).cross(c - a);
  if (std::abs(v) < 1e-12) return 0;
  return v > 0.0 ? 1 : -1;
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
         std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

}  // namespace

bool is_simple_polygon(std::span<const Vec2> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  if (std::abs(polygon_area(polygon)) < 1e-12) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a1 = polygon[i];
    const Vec2& a2 = polygon[(i + 1) % n];
    if (distance(a1, a2) < 1e-12) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share a vertex; skip them.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a1, a2, polygon[j], polygon[(j + 1) % n])) return false;
    }
  }
  return true;
}

void ObjectShape::validate() const {
  if (vertices.size() < 3) throw ValidationError("object polygon needs at least 3 vertices");
  for (const auto& v : vertices) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) throw ValidationError("object vertex is not finite");
  }
  if (!is_simple_polygon(vertices)) throw ValidationError("object polygon is not simple");
  for (std::size_t i = 0; i < grasp_points.size(); ++i) {
    if (distance_to_boundary(vertices, grasp_points[i]) > 1e-6) {
      throw ValidationError("grasp point " + std::to_string(i) + " is not on the object boundary");
    }
  }
}

ObjectShape canonical_vertex_order(const ObjectShape& shape) {
  ObjectShape out = shape;
  if (shape.vertices.empty()) return out;
  const auto smallest = std::min_element(shape.vertices.begin(), shape.vertices.end(), [](const Vec2& a, const Vec2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  std::rotate(out.vertices.begin(), out.vertices.begin() + (smallest - shape.vertices.begin()), out.vertices.end());
  return out;
}

std::vector<Vec2> posed_vertices(const ObjectShape& shape, const Pose2& pose) {
  std::vector<Vec2> out;
  out.reserve(shape.vertices.size());
  for (const auto& v : shape.vertices) out.push_back(transform_point(pose, v));
  return out;
}

PolygonSampler::PolygonSampler(const ObjectShape& shape, double resolution) {
  const auto& poly = shape.vertices;
  const double spacing = 0.5 * resolution;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(distance(a, b) / spacing)));
    for (std::size_t k = 0; k < n; ++k) {
      samples_.push_back(a + (b - a) * (static_cast<double>(k) / static_cast<double>(n)));
    }
  }
  Vec2 lo = poly.front();
  Vec2 hi = poly.front();
  for (const auto& v : poly) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y)};
  }
  const double pitch = resolution / std::numbers::sqrt2;
  for (double y = lo.y + 0.5 * pitch; y < hi.y; y += pitch) {
    for (double x = lo.x + 0.5 * pitch; x < hi.x; x += pitch) {
      if (point_in_polygon(poly, {x, y})) samples_.push_back({x, y});
    }
  }
}

bool PolygonSampler::collides(const OccupancyMap& map, double x, double y, double yaw) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  for (const auto& p : samples_) {
    const double wx = c * p.x - s * p.y + x;
    const double wy = s * p.x + c * p.y + y;
    if (map.is_obstacle(map.cell_x(wx), map.cell_y(wy))) return true;
  }
  return false;
}

bool PolygonSampler::collides(const OccupancyMap& map, const Pose2& pose) const {
  return collides(map, pose.position.x, pose.position.y, pose.yaw);
}

bool polygon_collides(const OccupancyMap& map, const ObjectShape& object, const Pose2& pose) {
  return PolygonSampler(object, map.resolution()).collides(map, pose);
}

bool segment_clear(const OccupancyMap& map, const Vec2& a, const Vec2& b) {
  const double len = distance(a, b);
  const auto n = static_cast<std::size_t>(std::ceil(len / (0.5 * map.resolution())));
  if (n == 0) return point_in_free_space(map, a);
  for (std::size_t k = 0; k <= n; ++k) {
    if (!point_in_free_space(map, a + (b - a) * (static_cast<double>(k) / static_cast<double>(n)))) return false;
  }
  return true;
}

RasterGrid rasterize_scene(const OccupancyMap& map, const ObjectShape* object, const Pose2& pose,
                           std::size_t out_size) {
  if (out_size == 0) throw ValidationError("raster size must be positive");
  RasterGrid grid{out_size, std::vector<double>(out_size * out_size, kRasterFree)};
  std::vector<Vec2> poly;
  if (object != nullptr) poly = posed_vertices(*object, pose);
  const double w = static_cast<double>(map.width_cells());
  const double h = static_cast<double>(map.height_cells());
  const double n = static_cast<double>(out_size);
  for (std::size_t r = 0; r < out_size; ++r) {
    const auto iy = static_cast<std::size_t>(std::floor((static_cast<double>(r) + 0.5) * h / n));
    for (std::size_t c = 0; c < out_size; ++c) {
      const auto ix = static_cast<std::size_t>(std::floor((static_cast<double>(c) + 0.5) * w / n));
      double v = map.at(ix, iy) == Cell::Obstacle ? kRasterObstacle : kRasterFree;
      if (v == kRasterFree && !poly.empty() && point_in_polygon(poly, map.cell_center(ix, iy))) v = kRasterObject;
      grid.values[r * out_size + c] = v;
    }
  }
  return grid;
}

}  // namespace cograsp
