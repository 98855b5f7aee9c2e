#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cograsp/scenario.hpp"

namespace cograsp {

/// JSON encoding documented in docs/scenario.schema.json.
nlohmann::json scenario_to_json(const Scenario& s);
/// Throws ValidationError on schema violations.
Scenario scenario_from_json(const nlohmann::json& j);

void save_scenario(const Scenario& s, const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

/// Pretty-printed JSON text terminated by a newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace cograsp
