#include "cograsp/render.hpp"

#include <cstdio>
#include <sstream>

#include "cograsp/errors.hpp"

namespace cograsp {

using nlohmann::json;

json planned_pair_to_json(const PlannedPair& p) {
  json segments = json::array();
  for (const auto& seg : p.trajectory.segments) {
    json cps = json::array();
    for (const auto& cp : seg.control_points) cps.push_back(cp);
    segments.push_back({{"region", seg.region_index}, {"control_points", cps}});
  }
  return {{"center", p.pair.first},
          {"context", p.pair.second},
          {"feasible", p.trajectory.feasible},
          {"status", p.trajectory.status},
          {"duration", p.trajectory.duration},
          {"objective", p.trajectory.objective_value},
          {"segments", segments}};
}

PlannedPair planned_pair_from_json(const json& j) {
  try {
    PlannedPair p;
    p.pair = {j.at("center").get<std::size_t>(), j.at("context").get<std::size_t>()};
    p.trajectory.feasible = j.at("feasible").get<bool>();
    p.trajectory.status = j.value("status", std::string{});
    p.trajectory.duration = j.at("duration").get<double>();
    p.trajectory.objective_value = j.value("objective", 0.0);
    for (const auto& s : j.at("segments")) {
      BezierSegment seg;
      seg.region_index = s.at("region").get<std::size_t>();
      const auto& cps = s.at("control_points");
      if (cps.size() != 4) throw ValidationError("a segment needs 4 control points");
      for (std::size_t k = 0; k < 4; ++k) seg.control_points[k] = cps[k].get<JointState>();
      p.trajectory.segments.push_back(seg);
    }
    if (!p.trajectory.segments.empty() && !(p.trajectory.duration > 0.0)) {
      throw ValidationError("trajectory duration must be positive");
    }
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed trajectory: ") + e.what());
  }
}

namespace {

class SvgWriter {
 public:
  SvgWriter(const OccupancyMap& map, double ppm) : map_(map), ppm_(ppm) {}

  double x(double wx) const { return (wx - map_.origin().x) * ppm_; }
  double y(double wy) const { return (map_.height_m() - (wy - map_.origin().y)) * ppm_; }

  std::string num(double v) const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }
  std::string point(const Vec2& p) const { return num(x(p.x)) + "," + num(y(p.y)); }

  std::ostringstream out;

 private:
  const OccupancyMap& map_;
  double ppm_;
};

void polyline(SvgWriter& w, const std::vector<Vec2>& pts, const std::string& stroke, const std::string& extra = "") {
  w.out << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\"" << extra << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) w.out << (i ? " " : "") << w.point(pts[i]);
  w.out << "\"/>\n";
}

void polygon(SvgWriter& w, const std::vector<Vec2>& pts, const std::string& style) {
  w.out << "  <polygon " << style << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) w.out << (i ? " " : "") << w.point(pts[i]);
  w.out << "\"/>\n";
}

void circle(SvgWriter& w, const Vec2& c, double r_px, const std::string& style) {
  w.out << "  <circle cx=\"" << w.num(w.x(c.x)) << "\" cy=\"" << w.num(w.y(c.y)) << "\" r=\"" << w.num(r_px) << "\" "
        << style << "/>\n";
}

}  // namespace

std::string render_svg(const Scenario& sc, const PlannedPair* planned, const RenderOptions& opts) {
  if (!(opts.pixels_per_meter > 0.0)) throw ValidationError("pixels_per_meter must be positive");
  if (opts.samples_per_segment < 2) throw ValidationError("samples_per_segment must be at least 2");
  const OccupancyMap& map = sc.map;
  SvgWriter w(map, opts.pixels_per_meter);
  const double width = map.width_m() * opts.pixels_per_meter;
  const double height = map.height_m() * opts.pixels_per_meter;
  w.out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << w.num(width) << "\" height=\""
        << w.num(height) << "\" viewBox=\"0 0 " << w.num(width) << " " << w.num(height) << "\">\n"
        << "  <rect x=\"0\" y=\"0\" width=\"" << w.num(width) << "\" height=\"" << w.num(height)
        << "\" fill=\"white\" stroke=\"black\"/>\n";

  // Obstacle cells merged into horizontal runs.
  const double cell = map.resolution() * opts.pixels_per_meter;
  w.out << "  <g fill=\"#444444\">\n";
  for (std::size_t iy = 0; iy < map.height_cells(); ++iy) {
    for (std::size_t ix = 0; ix < map.width_cells();) {
      if (map.at(ix, iy) != Cell::Obstacle) {
        ++ix;
        continue;
      }
      std::size_t end = ix;
      while (end < map.width_cells() && map.at(end, iy) == Cell::Obstacle) ++end;
      const double wx = map.origin().x + static_cast<double>(ix) * map.resolution();
      const double wy = map.origin().y + static_cast<double>(iy + 1) * map.resolution();
      w.out << "    <rect x=\"" << w.num(w.x(wx)) << "\" y=\"" << w.num(w.y(wy)) << "\" width=\""
            << w.num(static_cast<double>(end - ix) * cell) << "\" height=\"" << w.num(cell) << "\"/>\n";
      ix = end;
    }
  }
  w.out << "  </g>\n";

  polygon(w, posed_vertices(sc.object, sc.start_pose), "fill=\"#f4a261\" stroke=\"#8a4b14\" stroke-width=\"1.5\"");
  polygon(w, posed_vertices(sc.object, sc.goal_pose),
          "fill=\"none\" stroke=\"#2a9d8f\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"");

  w.out << "  <g>\n";
  for (const auto& g : sc.grasp_set) circle(w, g.base, 2.5, "fill=\"#8888ff\"");
  w.out << "  </g>\n";

  std::optional<PairIndex> pair = planned ? std::optional(planned->pair) : opts.highlight;
  if (pair) {
    for (std::size_t idx : {pair->first, pair->second}) {
      if (idx >= sc.grasp_set.size()) throw ValidationError("highlighted pair index out of range");
      const auto& g = sc.grasp_set[idx];
      polyline(w, {g.base, g.grasp}, "#d62828");
      circle(w, g.base, 0.3 * opts.pixels_per_meter, "fill=\"none\" stroke=\"#d62828\" stroke-width=\"2\"");
      circle(w, g.grasp, 4.0, "fill=\"#d62828\"");
    }
  }

  if (planned && !planned->trajectory.segments.empty()) {
    std::vector<Vec2> r1, r2, obj;
    const std::size_t n = opts.samples_per_segment;
    for (const auto& seg : planned->trajectory.segments) {
      for (std::size_t i = 0; i < n; ++i) {
        const JointState q = bezier_eval(seg, static_cast<double>(i) / static_cast<double>(n - 1));
        r1.push_back({q[joint::kRobot1X], q[joint::kRobot1Y]});
        r2.push_back({q[joint::kRobot2X], q[joint::kRobot2Y]});
        obj.push_back({q[joint::kObjectX], q[joint::kObjectY]});
      }
    }
    polyline(w, r1, "#e63946");
    polyline(w, r2, "#1d3557");
    polyline(w, obj, "#2a9d8f", " stroke-dasharray=\"4,3\"");
  }
  w.out << "</svg>\n";
  return w.out.str();
}

}  // namespace cograsp
