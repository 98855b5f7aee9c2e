#include "cograsp/feasibility_dataset.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "cograsp/errors.hpp"
#include "cograsp/random.hpp"
#include "cograsp/scenario_io.hpp"

namespace cograsp {

std::size_t LabeledScenario::max_dc_size() const {
  std::size_t best = 0;
  for (const auto& dc : dc_sets) best = std::max(best, dc.size());
  return best;
}

bool LabeledScenario::is_feasible(std::size_t center, std::size_t context) const {
  const auto& dc = dc_sets.at(center);
  return std::binary_search(dc.begin(), dc.end(), context);
}

void LabeledScenario::validate() const {
  const std::size_t m = size();
  if (dc_sets.size() != m) throw ValidationError("dc_sets must have one entry per grasp configuration");
  for (std::size_t i = 0; i < m; ++i) {
    const auto& dc = dc_sets[i];
    if (!std::is_sorted(dc.begin(), dc.end()) || std::adjacent_find(dc.begin(), dc.end()) != dc.end()) {
      throw ValidationError("dc_sets[" + std::to_string(i) + "] is not sorted and unique");
    }
    for (std::size_t j : dc) {
      if (j >= m) throw ValidationError("dc_sets index out of range");
      if (j == i) throw ValidationError("dc_sets contains a self-pair");
    }
  }
}

std::string split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ValidationError("unknown split '" + name + "'");
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

void NegativeSampleSpec::validate() const {
  if (!(alpha >= 1.0)) throw ValidationError("alpha must be >= 1");
}

bool admissible_pair(const std::vector<GraspConfiguration>& grasps, std::size_t center, std::size_t context,
                     double base_footprint_radius) {
  if (center == context) return false;
  const auto& a = grasps.at(center);
  const auto& b = grasps.at(context);
  if (a.grasp_index == b.grasp_index) return false;
  return distance(a.base, b.base) >= 2.0 * base_footprint_radius;
}

LabeledScenario generate_labels(const Scenario& scenario, const RegionSequence& regions, const LabelConfig& cfg,
                                LabelStats* stats, const DiagnosticSink& sink) {
  cfg.planner.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto& grasps = scenario.grasp_set;
  const std::size_t m = grasps.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (admissible_pair(grasps, i, j, cfg.base_footprint_radius)) pairs.emplace_back(i, j);
    }
  }

  std::vector<char> label(pairs.size(), 0);
  std::vector<char> failed(pairs.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t p = next++; p < pairs.size(); p = next++) {
      const auto [i, j] = pairs[p];
      try {
        label[p] = static_cast<char>(feasibility(scenario, grasps[i], grasps[j], regions, cfg.planner));
      } catch (const Error& e) {
        failed[p] = 1;
        const std::string msg = "pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what();
        const std::lock_guard lock(log_mutex);
        if (sink) {
          sink(msg);
        } else {
          std::clog << msg << "\n";
        }
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, pairs.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  LabeledScenario out{scenario, std::vector<std::vector<std::size_t>>(m)};
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (label[p] != 0) out.dc_sets[pairs[p].first].push_back(pairs[p].second);
  }
  if (stats != nullptr) {
    stats->pairs_evaluated = pairs.size();
    stats->pairs_feasible = static_cast<std::size_t>(std::count(label.begin(), label.end(), 1));
    stats->pairs_failed = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
    stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return out;
}

RegionSequence scenario_regions(const Scenario& scenario, const GrowConfig& grow) {
  std::vector<Pose2> seeds = scenario.seeds;
  if (seeds.empty()) seeds = {scenario.start_pose, scenario.goal_pose};
  return build_region_sequence(scenario.map, scenario.start_pose, scenario.goal_pose, seeds, scenario.object, grow);
}

LabeledScenario label_scenario(const Scenario& scenario, const LabelConfig& cfg, LabelStats* stats,
                               const DiagnosticSink& sink) {
  RegionSequence regions;
  try {
    regions = scenario_regions(scenario);
  } catch (const Error& e) {
    const std::string msg = std::string("corridor construction failed, all pairs infeasible: ") + e.what();
    if (sink) {
      sink(msg);
    } else {
      std::clog << msg << "\n";
    }
    if (stats != nullptr) *stats = {};
    return {scenario, std::vector<std::vector<std::size_t>>(scenario.grasp_set.size())};
  }
  return generate_labels(scenario, regions, cfg, stats, sink);
}

std::size_t negative_pool_target(const LabeledScenario& labeled, double alpha) {
  // The slack keeps 1.1 * 10 at 11 despite rounding.
  const double k = std::ceil(alpha * static_cast<double>(labeled.max_dc_size()) - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

std::vector<std::size_t> negative_sample(const LabeledScenario& labeled, std::size_t center,
                                         const NegativeSampleSpec& spec) {
  spec.validate();
  const std::size_t m = labeled.size();
  if (m < 2) throw ValidationError("negative sampling needs at least two grasp configurations");
  if (center >= m) throw ValidationError("center index out of range");
  const auto& dc = labeled.dc_sets.at(center);
  const std::size_t k = negative_pool_target(labeled, spec.alpha);
  if (dc.size() >= k) return {};
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < m; ++j) {
    if (j != center && !std::binary_search(dc.begin(), dc.end(), j)) pool.push_back(j);
  }
  Rng rng(mix_seed(spec.seed, center));
  return rng.sample_without_replacement(std::move(pool), k - dc.size());
}

Dataset split_dataset(std::vector<LabeledScenario> scenarios, std::array<double, 3> fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ValidationError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  const std::size_t n = scenarios.size();
  const auto count = [&](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
  const std::size_t n_val = count(fractions[1]);
  const std::size_t n_test = count(fractions[2]);
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  Dataset ds;
  ds.seed = seed;
  for (std::size_t r = 0; r < n; ++r) {
    ds.scenarios.push_back(std::move(scenarios[order[r]]));
    ds.split.push_back(r < n_train ? Split::Train : (r < n_train + n_val ? Split::Val : Split::Test));
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.split.size() != ds.scenarios.size()) throw ValidationError("dataset split and scenarios differ in size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  nlohmann::json header{{"format", "cograsp-dataset"},
                        {"version", kDatasetFormatVersion},
                        {"seed", ds.seed},
                        {"count", ds.scenarios.size()}};
  out << header.dump() << "\n";
  for (std::size_t i = 0; i < ds.scenarios.size(); ++i) {
    const auto& ls = ds.scenarios[i];
    nlohmann::json line{{"split", split_name(ds.split[i])},
                        {"scenario", scenario_to_json(ls.scenario)},
                        {"dc_sets", ls.dc_sets}};
    out << line.dump() << "\n";
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::string text;
  if (!std::getline(in, text)) throw CorruptFile("dataset file is empty");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw CorruptFile("dataset header is not valid JSON");
  }
  if (!header.is_object() || header.value("format", "") != "cograsp-dataset") {
    throw CorruptFile("not a dataset file");
  }
  if (!header.contains("version") || !header["version"].is_number_integer()) {
    throw CorruptFile("dataset header has no version");
  }
  if (header["version"].get<int>() != kDatasetFormatVersion) {
    throw FormatVersionMismatch("dataset version " + header["version"].dump() + " is not supported");
  }
  Dataset ds;
  std::size_t count = 0;
  try {
    ds.seed = header.at("seed").get<std::uint64_t>();
    count = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw CorruptFile("dataset header is incomplete");
  }
  std::size_t line_no = 1;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(text);
      LabeledScenario ls{scenario_from_json(j.at("scenario")),
                         j.at("dc_sets").get<std::vector<std::vector<std::size_t>>>()};
      ls.validate();
      ds.split.push_back(parse_split(j.at("split").get<std::string>()));
      ds.scenarios.push_back(std::move(ls));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFile("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw CorruptFile("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (ds.scenarios.size() != count) {
    throw CorruptFile("expected " + std::to_string(count) + " scenarios, found " + std::to_string(ds.scenarios.size()));
  }
  return ds;
}

}  // namespace cograsp
