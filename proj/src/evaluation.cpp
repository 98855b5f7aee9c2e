#include "cograsp/evaluation.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "cograsp/errors.hpp"
#include "cograsp/random.hpp"

namespace cograsp {

using nlohmann::json;

void EvalConfig::validate() const {
  if (ks.empty()) throw ValidationError("at least one k is required");
  for (std::size_t k : ks) {
    if (k == 0) throw ValidationError("k must be at least 1");
  }
  if (random_trials == 0) throw ValidationError("random_trials must be at least 1");
  if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0)) throw ValidationError("threshold must lie in [0, 1]");
  if (!(base_footprint_radius > 0.0)) throw ValidationError("base_footprint_radius must be positive");
  if (jobs == 0) throw ValidationError("jobs must be at least 1");
}

std::vector<CEModel::Embeddings> embed_scenarios(const CEModel& model, const Dataset& ds,
                                                 const std::vector<std::size_t>& indices, std::size_t jobs) {
  std::vector<CEModel::Embeddings> out(indices.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    CEModel local = model;
    for (std::size_t k = next++; k < indices.size(); k = next++) {
      try {
        out[k] = local.embed_scenario(ds.scenarios.at(indices[k]).scenario);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, indices.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

AffinityMatrix ranked_affinity(const CEModel::Embeddings& e, const Scenario& scenario, double base_footprint_radius) {
  AffinityMatrix a = affinity_matrix(e.center, e.context);
  mask_inadmissible(a, scenario.grasp_set, base_footprint_radius);
  return a;
}

namespace {

struct PairScores {
  std::vector<double> scores;
  std::vector<int> labels;

  void add(const AffinityMatrix& a, const LabeledScenario& ls, double temperature) {
    for (const auto& [i, j] : unmasked_pairs(a)) {
      scores.push_back(pair_probability(a.at(i, j), temperature));
      labels.push_back(ls.is_feasible(i, j) ? 1 : 0);
    }
  }
  bool both_classes() const {
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    return pos > 0 && static_cast<std::size_t>(pos) < labels.size();
  }
};

RateSummary summarize(const std::vector<const ScenarioEvaluation*>& items, std::size_t nk) {
  RateSummary s;
  s.scenarios = items.size();
  s.model.assign(nk, 0.0);
  s.random.assign(nk, 0.0);
  if (items.empty()) return s;
  for (const auto* e : items) {
    for (std::size_t k = 0; k < nk; ++k) {
      s.model[k] += e->success[k] ? 1.0 : 0.0;
      s.random[k] += e->random_success[k];
    }
  }
  for (std::size_t k = 0; k < nk; ++k) {
    s.model[k] /= static_cast<double>(items.size());
    s.random[k] /= static_cast<double>(items.size());
  }
  return s;
}

}  // namespace

EvalReport evaluate_model(const CEModel& model, const Dataset& ds, Split split, const EvalConfig& cfg) {
  cfg.validate();
  EvalReport report;
  report.split = split;
  report.config = cfg;
  const double tau = model.config().temperature;
  const auto indices = ds.indices(split);
  const auto embeddings = embed_scenarios(model, ds, indices, cfg.jobs);

  PairScores eval_scores;
  for (std::size_t n = 0; n < indices.size(); ++n) {
    const std::size_t s = indices[n];
    const LabeledScenario& ls = ds.scenarios[s];
    const AffinityMatrix a = ranked_affinity(embeddings[n], ls.scenario, cfg.base_footprint_radius);
    const auto pool = unmasked_pairs(a);
    ScenarioEvaluation ev;
    ev.index = s;
    ev.m = ls.size();
    ev.candidate_pairs = pool.size();
    for (const auto& [i, j] : pool) ev.feasible_pairs += ls.is_feasible(i, j) ? 1 : 0;
    for (std::size_t k : cfg.ks) {
      ev.success.push_back(!pool.empty() && top_k_success(a, ls.dc_sets, k));
      ev.random_success.push_back(
          pool.empty() ? 0.0 : random_baseline(ev.m, ls.dc_sets, k, cfg.random_trials, mix_seed(cfg.seed, s), pool));
    }
    if (!pool.empty()) {
      ev.best_pair = select_best(a);
      ev.best_affinity = a.at(ev.best_pair->first, ev.best_pair->second);
    }
    eval_scores.add(a, ls, tau);
    report.scenarios.push_back(std::move(ev));
  }

  const std::size_t nk = cfg.ks.size();
  std::vector<const ScenarioEvaluation*> all, solvable;
  std::map<std::string, std::vector<const ScenarioEvaluation*>> groups;
  for (const auto& ev : report.scenarios) {
    all.push_back(&ev);
    if (ev.feasible_pairs > 0) solvable.push_back(&ev);
    if (cfg.group_by) {
      const auto& meta = ds.scenarios[ev.index].scenario.meta;
      const auto it = meta.find(*cfg.group_by);
      groups[it == meta.end() ? std::string("(none)") : it->second].push_back(&ev);
    }
  }
  report.all = summarize(all, nk);
  report.solvable = summarize(solvable, nk);
  for (const auto& [key, items] : groups) report.groups[key] = summarize(items, nk);

  if (eval_scores.both_classes()) {
    double threshold = 0.0;
    if (cfg.threshold) {
      threshold = *cfg.threshold;
      report.threshold_source = "fixed";
    } else {
      PairScores val_scores;
      if (split != Split::Val) {
        const auto val = ds.indices(Split::Val);
        const auto val_emb = embed_scenarios(model, ds, val, cfg.jobs);
        for (std::size_t n = 0; n < val.size(); ++n) {
          const LabeledScenario& ls = ds.scenarios[val[n]];
          val_scores.add(ranked_affinity(val_emb[n], ls.scenario, cfg.base_footprint_radius), ls, tau);
        }
      }
      if (val_scores.both_classes()) {
        threshold = best_threshold_by_f1(val_scores.scores, val_scores.labels);
        report.threshold_source = "f1_on_val";
      } else {
        threshold = best_threshold_by_f1(eval_scores.scores, eval_scores.labels);
        report.threshold_source = "f1_on_" + split_name(split);
      }
    }
    report.metrics = classification_metrics(eval_scores.scores, eval_scores.labels, threshold);
  }
  return report;
}

namespace {

json rates_json(const RateSummary& s, const std::vector<std::size_t>& ks) {
  json model = json::object();
  json random = json::object();
  for (std::size_t k = 0; k < ks.size(); ++k) {
    model["top" + std::to_string(ks[k])] = s.model[k];
    random["top" + std::to_string(ks[k])] = s.random[k];
  }
  return {{"scenarios", s.scenarios}, {"model", model}, {"random", random}};
}

}  // namespace

json report_to_json(const EvalReport& r) {
  const auto& ks = r.config.ks;
  json scenarios = json::array();
  for (const auto& ev : r.scenarios) {
    json success = json::object();
    json random = json::object();
    for (std::size_t k = 0; k < ks.size(); ++k) {
      success["top" + std::to_string(ks[k])] = static_cast<bool>(ev.success[k]);
      random["top" + std::to_string(ks[k])] = ev.random_success[k];
    }
    json item{{"index", ev.index},
              {"m", ev.m},
              {"candidate_pairs", ev.candidate_pairs},
              {"feasible_pairs", ev.feasible_pairs},
              {"success", success},
              {"random", random}};
    if (ev.best_pair) {
      item["best_pair"] = {ev.best_pair->first, ev.best_pair->second};
      item["best_affinity"] = ev.best_affinity;
    } else {
      item["best_pair"] = nullptr;
    }
    scenarios.push_back(std::move(item));
  }
  json j{{"split", split_name(r.split)},
         {"aggregate", rates_json(r.all, ks)},
         {"solvable", rates_json(r.solvable, ks)},
         {"random_baseline", {{"trials", r.config.random_trials}, {"seed", r.config.seed}}},
         {"scenarios", scenarios}};
  if (r.metrics) {
    const MetricsReport& m = *r.metrics;
    j["metrics"] = {{"accuracy", m.accuracy},
                    {"precision", m.precision},
                    {"recall", m.recall},
                    {"f1", m.f1},
                    {"auc_roc", m.auc_roc ? json(*m.auc_roc) : json(nullptr)},
                    {"threshold", m.threshold},
                    {"threshold_source", r.threshold_source},
                    {"confusion",
                     {{"tp", m.true_positive}, {"fp", m.false_positive}, {"tn", m.true_negative}, {"fn", m.false_negative}}}};
  } else {
    j["metrics"] = nullptr;
  }
  if (r.config.group_by) {
    json groups = json::object();
    for (const auto& [key, s] : r.groups) groups[key] = rates_json(s, ks);
    j["groups"] = {{"key", *r.config.group_by}, {"values", groups}};
  }
  return j;
}

}  // namespace cograsp
