#include "cograsp/scenario_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "cograsp/errors.hpp"

namespace cograsp {

using nlohmann::json;

void Scenario::validate() const {
  object.validate();
  if (polygon_collides(map, object, start_pose)) throw ValidationError("object collides at start pose");
  if (polygon_collides(map, object, goal_pose)) throw ValidationError("object collides at goal pose");
}

namespace {

json vec_json(const Vec2& v) { return json::array({v.x, v.y}); }

json pose_json(const Pose2& p) { return {{"x", p.position.x}, {"y", p.position.y}, {"yaw", p.yaw}}; }

void require_keys(const json& j, const std::string& what, const std::set<std::string>& required,
                  const std::set<std::string>& optional = {}) {
  if (!j.is_object()) throw ValidationError(what + " must be an object");
  for (const auto& key : required) {
    if (!j.contains(key)) throw ValidationError(what + " is missing key '" + key + "'");
  }
  for (const auto& [key, _] : j.items()) {
    if (!required.contains(key) && !optional.contains(key)) {
      throw ValidationError(what + " has unknown key '" + key + "'");
    }
  }
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ValidationError(what + " must be a number");
  return j.get<double>();
}

Vec2 vec_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(what + " must be a [x, y] pair");
  return {number(j[0], what), number(j[1], what)};
}

Pose2 pose_from(const json& j, const std::string& what) {
  require_keys(j, what, {"x", "y", "yaw"});
  return Pose2(number(j["x"], what), number(j["y"], what), number(j["yaw"], what));
}

std::vector<Vec2> points_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array");
  std::vector<Vec2> out;
  for (const auto& e : j) out.push_back(vec_from(e, what));
  return out;
}

std::size_t count_from(const json& j, const std::string& what) {
  if (!j.is_number_integer() || j.get<long long>() < 0) throw ValidationError(what + " must be a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace

json scenario_to_json(const Scenario& s) {
  std::string cells;
  cells.reserve(s.map.cells().size());
  for (Cell c : s.map.cells()) cells.push_back(c == Cell::Obstacle ? '1' : '0');
  json j;
  j["map"] = {{"width", s.map.width_cells()},
              {"height", s.map.height_cells()},
              {"resolution", s.map.resolution()},
              {"origin", vec_json(s.map.origin())},
              {"cells", cells}};
  json verts = json::array();
  for (const auto& v : s.object.vertices) verts.push_back(vec_json(v));
  json grasps = json::array();
  for (const auto& g : s.object.grasp_points) grasps.push_back(vec_json(g));
  j["object"] = {{"vertices", verts}, {"grasp_points", grasps}};
  j["start_pose"] = pose_json(s.start_pose);
  j["goal_pose"] = pose_json(s.goal_pose);
  if (!s.grasp_set.empty()) {
    json gs = json::array();
    for (const auto& g : s.grasp_set) {
      gs.push_back({{"base", vec_json(g.base)}, {"grasp", vec_json(g.grasp)}, {"grasp_index", g.grasp_index}});
    }
    j["grasp_set"] = gs;
  }
  if (!s.seeds.empty()) {
    json seeds = json::array();
    for (const auto& p : s.seeds) seeds.push_back(pose_json(p));
    j["seeds"] = seeds;
  }
  if (!s.meta.empty()) j["meta"] = s.meta;
  return j;
}

Scenario scenario_from_json(const json& j) {
  require_keys(j, "scenario", {"map", "object", "start_pose", "goal_pose"}, {"grasp_set", "seeds", "meta"});
  const json& m = j["map"];
  require_keys(m, "map", {"width", "height", "resolution", "origin", "cells"});
  const std::size_t w = count_from(m["width"], "map.width");
  const std::size_t h = count_from(m["height"], "map.height");
  if (!m["cells"].is_string()) throw ValidationError("map.cells must be a string");
  const auto& text = m["cells"].get_ref<const std::string&>();
  if (text.size() != w * h) throw ValidationError("map.cells length does not match width x height");
  std::vector<Cell> cells;
  cells.reserve(text.size());
  for (char ch : text) {
    if (ch != '0' && ch != '1') throw ValidationError("map.cells may only contain '0' and '1'");
    cells.push_back(ch == '1' ? Cell::Obstacle : Cell::Free);
  }
  Scenario s;
  s.map = OccupancyMap(w, h, number(m["resolution"], "map.resolution"), vec_from(m["origin"], "map.origin"),
                       std::move(cells));
  const json& o = j["object"];
  require_keys(o, "object", {"vertices", "grasp_points"});
  s.object.vertices = points_from(o["vertices"], "object.vertices");
  s.object.grasp_points = points_from(o["grasp_points"], "object.grasp_points");
  s.start_pose = pose_from(j["start_pose"], "start_pose");
  s.goal_pose = pose_from(j["goal_pose"], "goal_pose");
  if (j.contains("grasp_set")) {
    if (!j["grasp_set"].is_array()) throw ValidationError("grasp_set must be an array");
    for (const auto& g : j["grasp_set"]) {
      require_keys(g, "grasp_set entry", {"base", "grasp", "grasp_index"});
      GraspConfiguration gc{vec_from(g["base"], "grasp_set.base"), vec_from(g["grasp"], "grasp_set.grasp"),
                            count_from(g["grasp_index"], "grasp_set.grasp_index")};
      if (gc.grasp_index >= s.object.grasp_points.size()) throw ValidationError("grasp_index out of range");
      s.grasp_set.push_back(gc);
    }
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) throw ValidationError("seeds must be an array");
    for (const auto& p : j["seeds"]) s.seeds.push_back(pose_from(p, "seeds entry"));
  }
  if (j.contains("meta")) {
    if (!j["meta"].is_object()) throw ValidationError("meta must be an object");
    for (const auto& [k, v] : j["meta"].items()) {
      if (!v.is_string()) throw ValidationError("meta values must be strings");
      s.meta[k] = v.get<std::string>();
    }
  }
  s.validate();
  return s;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_json(scenario_to_json(s));
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read scenario file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("scenario file " + path.string() + " is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace cograsp
