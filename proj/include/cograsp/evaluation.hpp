#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cograsp/ce_model.hpp"
#include "cograsp/feasibility_dataset.hpp"
#include "cograsp/ranking.hpp"

namespace cograsp {

struct EvalConfig {
  std::vector<std::size_t> ks{1, 3, 5};
  /// Fixed decision threshold; otherwise the F1-best threshold on the
  /// validation split (or on the evaluated split when validation has one class).
  std::optional<double> threshold;
  std::size_t random_trials = 10000;
  std::uint64_t seed = 0;
  double base_footprint_radius = 0.30;
  /// Scenario meta key whose values define report groups.
  std::optional<std::string> group_by;
  std::size_t jobs = 1;

  void validate() const;
};

struct ScenarioEvaluation {
  std::size_t index = 0;  // into Dataset::scenarios
  std::size_t m = 0;
  std::size_t candidate_pairs = 0;  // admissible ordered pairs
  std::size_t feasible_pairs = 0;
  std::vector<bool> success;          // per k
  std::vector<double> random_success;  // per k
  std::optional<PairIndex> best_pair;
  double best_affinity = 0.0;
};

struct RateSummary {
  std::size_t scenarios = 0;
  std::vector<double> model;   // per k, unweighted mean over scenarios
  std::vector<double> random;  // per k
};

struct EvalReport {
  Split split = Split::Test;
  EvalConfig config;
  std::vector<ScenarioEvaluation> scenarios;
  RateSummary all;
  RateSummary solvable;  // scenarios with at least one feasible candidate pair
  std::map<std::string, RateSummary> groups;
  std::optional<MetricsReport> metrics;  // absent when the split has one class
  std::string threshold_source;
};

/// Embeddings for the listed scenarios; `jobs` worker threads each use their
/// own copy of the model.
std::vector<CEModel::Embeddings> embed_scenarios(const CEModel& model, const Dataset& ds,
                                                 const std::vector<std::size_t>& indices, std::size_t jobs);

/// Affinity matrix with self pairs and inadmissible pairs masked.
AffinityMatrix ranked_affinity(const CEModel::Embeddings& e, const Scenario& scenario, double base_footprint_radius);

EvalReport evaluate_model(const CEModel& model, const Dataset& ds, Split split, const EvalConfig& cfg);

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace cograsp
