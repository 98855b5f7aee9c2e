#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cograsp/corridor_planner.hpp"
#include "cograsp/scenario.hpp"

namespace cograsp {

/// A scenario with its oracle labels. dc_sets[i] is the sorted list of
/// context indices j with S(G_i, G_j) = 1.
struct LabeledScenario {
  Scenario scenario;
  std::vector<std::vector<std::size_t>> dc_sets;

  std::size_t size() const { return scenario.grasp_set.size(); }
  std::size_t max_dc_size() const;
  bool is_feasible(std::size_t center, std::size_t context) const;
  void validate() const;

  bool operator==(const LabeledScenario&) const = default;
};

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split parse_split(const std::string& name);

struct Dataset {
  std::vector<LabeledScenario> scenarios;
  std::vector<Split> split;  // parallel to scenarios
  std::uint64_t seed = 0;

  std::vector<std::size_t> indices(Split s) const;

  bool operator==(const Dataset&) const = default;
};

struct NegativeSampleSpec {
  double alpha = 1.10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabelConfig {
  PlannerConfig planner;
  double base_footprint_radius = 0.30;
  std::size_t jobs = 1;
};

struct LabelStats {
  std::size_t pairs_evaluated = 0;
  std::size_t pairs_feasible = 0;
  std::size_t pairs_failed = 0;  // planner threw; counted as infeasible
  double seconds = 0.0;
};

/// Pairs sharing a grasp point or with overlapping base discs are never labeled.
bool admissible_pair(const std::vector<GraspConfiguration>& grasps, std::size_t center, std::size_t context,
                     double base_footprint_radius);

/// Per-pair diagnostic sink; defaults to std::clog.
using DiagnosticSink = std::function<void(const std::string&)>;

/// Runs the trajectory oracle over every admissible ordered pair.
LabeledScenario generate_labels(const Scenario& scenario, const RegionSequence& regions, const LabelConfig& cfg,
                                LabelStats* stats = nullptr, const DiagnosticSink& sink = {});

/// Regions from the scenario's stored seeds, or from [start, goal] when it has none.
RegionSequence scenario_regions(const Scenario& scenario, const GrowConfig& grow = {});

/// generate_labels over scenario_regions; a broken corridor gives all-empty DC sets.
LabeledScenario label_scenario(const Scenario& scenario, const LabelConfig& cfg, LabelStats* stats = nullptr,
                               const DiagnosticSink& sink = {});

/// K = ceil(alpha * max |DC|), at least 1.
std::size_t negative_pool_target(const LabeledScenario& labeled, double alpha);

/// Uniform draws without replacement from G \ ({center} u DC(center)), sized
/// K - |DC(center)| and capped by the pool.
std::vector<std::size_t> negative_sample(const LabeledScenario& labeled, std::size_t center,
                                         const NegativeSampleSpec& spec);

/// Seeded shuffle, then contiguous train/val/test blocks. Val and test sizes
/// are floor(fraction * n); train takes the remainder.
Dataset split_dataset(std::vector<LabeledScenario> scenarios, std::array<double, 3> fractions, std::uint64_t seed);

inline constexpr int kDatasetFormatVersion = 1;

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace cograsp
