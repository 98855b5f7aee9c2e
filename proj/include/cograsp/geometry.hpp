#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cograsp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
  bool operator==(const Vec2&) const = default;

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  /// Counter-clockwise perpendicular (-y, x).
  Vec2 perp() const { return {-y, x}; }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

/// Wrap an angle into [-pi, pi).
double wrap_angle(double a);

/// Planar rigid pose. The yaw is wrapped into [-pi, pi) on construction.
struct Pose2 {
  Vec2 position;
  double yaw = 0.0;

  Pose2() = default;
  Pose2(Vec2 p, double heading) : position(p), yaw(wrap_angle(heading)) {}
  Pose2(double x, double y, double heading) : Pose2(Vec2{x, y}, heading) {}

  bool operator==(const Pose2&) const = default;
};

Vec2 rotate(const Vec2& v, double angle);

/// Rotate `p` by the pose's yaw, then translate by its position.
Vec2 transform_point(const Pose2& pose, const Vec2& p);

Pose2 inverse(const Pose2& pose);

enum class Cell : std::uint8_t { Free = 0, Obstacle = 1 };

/// Row-major occupancy grid. Cell (ix, iy) covers
/// [origin.x + ix*res, origin.x + (ix+1)*res) x [origin.y + iy*res, ...);
/// row iy = 0 is the bottom row.
class OccupancyMap {
 public:
  OccupancyMap(std::size_t width_cells, std::size_t height_cells, double resolution, Vec2 origin = {},
               Cell fill = Cell::Free);
  OccupancyMap(std::size_t width_cells, std::size_t height_cells, double resolution, Vec2 origin,
               std::vector<Cell> cells);

  std::size_t width_cells() const { return width_; }
  std::size_t height_cells() const { return height_; }
  double resolution() const { return resolution_; }
  const Vec2& origin() const { return origin_; }
  double width_m() const { return static_cast<double>(width_) * resolution_; }
  double height_m() const { return static_cast<double>(height_) * resolution_; }
  const std::vector<Cell>& cells() const { return cells_; }

  bool in_bounds(std::int64_t ix, std::int64_t iy) const {
    return ix >= 0 && iy >= 0 && ix < static_cast<std::int64_t>(width_) && iy < static_cast<std::int64_t>(height_);
  }
  /// Out-of-bounds indices count as obstacles.
  bool is_obstacle(std::int64_t ix, std::int64_t iy) const {
    return !in_bounds(ix, iy) || cells_[static_cast<std::size_t>(iy) * width_ + static_cast<std::size_t>(ix)] ==
                                     Cell::Obstacle;
  }
  Cell at(std::size_t ix, std::size_t iy) const { return cells_[iy * width_ + ix]; }
  void set(std::size_t ix, std::size_t iy, Cell c) { cells_[iy * width_ + ix] = c; }

  std::int64_t cell_x(double x) const { return static_cast<std::int64_t>(std::floor((x - origin_.x) / resolution_)); }
  std::int64_t cell_y(double y) const { return static_cast<std::int64_t>(std::floor((y - origin_.y) / resolution_)); }
  Vec2 cell_center(std::size_t ix, std::size_t iy) const {
    return {origin_.x + (static_cast<double>(ix) + 0.5) * resolution_,
            origin_.y + (static_cast<double>(iy) + 0.5) * resolution_};
  }

  /// Mark every cell whose center lies in the axis-aligned rectangle [lo, hi].
  void fill_rect(const Vec2& lo, const Vec2& hi, Cell c);

  bool operator==(const OccupancyMap&) const = default;

 private:
  std::size_t width_;
  std::size_t height_;
  double resolution_;
  Vec2 origin_;
  std::vector<Cell> cells_;
};

/// Object polygon and its grasp points, both in the object frame.
struct ObjectShape {
  std::vector<Vec2> vertices;
  std::vector<Vec2> grasp_points;

  /// Throws ValidationError unless the shape is a simple polygon with >= 3
  /// vertices and every grasp point lies within 1e-6 m of the boundary.
  void validate() const;

  bool operator==(const ObjectShape&) const = default;
};

/// Vertices rotated so the sequence starts at the lexicographically smallest
/// vertex, keeping the winding direction.
ObjectShape canonical_vertex_order(const ObjectShape& shape);

std::vector<Vec2> posed_vertices(const ObjectShape& shape, const Pose2& pose);

bool point_in_polygon(std::span<const Vec2> polygon, const Vec2& p);
double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b);
double distance_to_boundary(std::span<const Vec2> polygon, const Vec2& p);
/// Zero inside the polygon, distance to the boundary outside.
double distance_to_polygon(std::span<const Vec2> polygon, const Vec2& p);
bool is_simple_polygon(std::span<const Vec2> polygon);
double polygon_area(std::span<const Vec2> polygon);

/// True iff p lies in a Free cell. Points outside the map are not free.
bool point_in_free_space(const OccupancyMap& map, const Vec2& p);

/// Precomputed object-frame sample set used for repeated collision queries
/// of one shape on maps of one resolution: boundary points at spacing
/// <= resolution/2 and an interior grid at pitch resolution/sqrt(2), which
/// hits every grid cell lying wholly inside the polygon.
class PolygonSampler {
 public:
  PolygonSampler(const ObjectShape& shape, double resolution);
  bool collides(const OccupancyMap& map, const Pose2& pose) const;
  bool collides(const OccupancyMap& map, double x, double y, double yaw) const;
  const std::vector<Vec2>& samples() const { return samples_; }

 private:
  std::vector<Vec2> samples_;
};

bool polygon_collides(const OccupancyMap& map, const ObjectShape& object, const Pose2& pose);

/// True iff every point sampled along [a, b] at spacing <= resolution/2 is free.
bool segment_clear(const OccupancyMap& map, const Vec2& a, const Vec2& b);

/// Square raster of the scene; row r samples map row floor((r+0.5)*H/n)
/// (bottom row first), column c samples floor((c+0.5)*W/n).
struct RasterGrid {
  std::size_t size = 0;
  std::vector<double> values;
  double at(std::size_t row, std::size_t col) const { return values[row * size + col]; }
};

inline constexpr double kRasterObstacle = 1.0;
inline constexpr double kRasterObject = 0.5;
inline constexpr double kRasterFree = 0.0;

/// Obstacle 1.0, free 0.0, object-occupied 0.5 (nearest-neighbour downsampling).
/// Pass `object == nullptr` to omit the object. Requires out_size >= 8.
RasterGrid rasterize_scene(const OccupancyMap& map, const ObjectShape* object, const Pose2& pose,
                           std::size_t out_size);

}  // namespace cograsp
