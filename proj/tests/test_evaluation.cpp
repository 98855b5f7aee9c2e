#include <gtest/gtest.h>

#include "cograsp/errors.hpp"
#include "cograsp/evaluation.hpp"
#include "fixtures.hpp"

using namespace cograsp;

namespace {

CEModelConfig small_config() {
  CEModelConfig cfg;
  cfg.embed_dim = 8;
  cfg.mlp_hidden = 8;
  cfg.gru_hidden = 4;
  cfg.raster_size = 16;
  cfg.conv_channels = {2, 4};
  return cfg;
}

LabeledScenario labeled(Scenario sc, std::vector<std::vector<std::size_t>> dc, const std::string& table) {
  sc.meta["table"] = table;
  LabeledScenario ls;
  ls.scenario = std::move(sc);
  ls.dc_sets = std::move(dc);
  return ls;
}

Dataset small_dataset() {
  Dataset ds;
  ds.scenarios = {labeled(fixtures::six_config(), {{2, 3}, {2, 3}, {0, 1}, {0, 1}, {}, {}}, "a"),
                  labeled(fixtures::open_four(), {{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}, "b"),
                  labeled(fixtures::three_config(), {{}, {}, {}}, "a"),
                  labeled(fixtures::six_config(), {{2}, {}, {0}, {}, {}, {}}, "b")};
  ds.split = {Split::Test, Split::Test, Split::Test, Split::Val};
  return ds;
}

}  // namespace

TEST(EvaluateModel, PerScenarioRanksMatchDirectComputation) {
  const Dataset ds = small_dataset();
  const CEModel model(small_config(), 3);
  EvalConfig cfg;
  cfg.random_trials = 2000;
  cfg.group_by = "table";
  const EvalReport r = evaluate_model(model, ds, Split::Test, cfg);
  ASSERT_EQ(r.scenarios.size(), 3u);

  CEModel copy = model;
  for (const auto& ev : r.scenarios) {
    const LabeledScenario& ls = ds.scenarios[ev.index];
    const auto e = copy.embed_scenario(ls.scenario);
    AffinityMatrix a = affinity_matrix(e.center, e.context);
    mask_inadmissible(a, ls.scenario.grasp_set, 0.30);
    for (std::size_t k = 0; k < cfg.ks.size(); ++k) {
      EXPECT_EQ(ev.success[k], top_k_success(a, ls.dc_sets, cfg.ks[k]));
    }
  }
  // open_four: every admissible pair is feasible, so both rates are 1.
  EXPECT_EQ(r.scenarios[1].random_success[0], 1.0);
  EXPECT_TRUE(r.scenarios[1].success[0]);
  // three_config has no feasible pair.
  EXPECT_EQ(r.scenarios[2].feasible_pairs, 0u);
  EXPECT_EQ(r.scenarios[2].random_success[2], 0.0);
  EXPECT_EQ(r.solvable.scenarios, 2u);
  EXPECT_EQ(r.groups.at("a").scenarios, 2u);
  EXPECT_EQ(r.groups.at("b").scenarios, 1u);
  ASSERT_TRUE(r.metrics.has_value());
  EXPECT_EQ(r.threshold_source, "f1_on_val");
  const auto& m = *r.metrics;
  EXPECT_EQ(m.true_positive + m.false_positive + m.true_negative + m.false_negative,
            r.scenarios[0].candidate_pairs + r.scenarios[1].candidate_pairs + r.scenarios[2].candidate_pairs);
}

TEST(EvaluateModel, ThreadCountDoesNotChangeReport) {
  const Dataset ds = small_dataset();
  const CEModel model(small_config(), 5);
  EvalConfig cfg;
  cfg.random_trials = 500;
  const auto one = report_to_json(evaluate_model(model, ds, Split::Test, cfg)).dump();
  cfg.jobs = 3;
  const auto three = report_to_json(evaluate_model(model, ds, Split::Test, cfg)).dump();
  EXPECT_EQ(one, three);
}

TEST(EvaluateModel, FixedThresholdAndValidation) {
  const Dataset ds = small_dataset();
  const CEModel model(small_config(), 5);
  EvalConfig cfg;
  cfg.threshold = 0.64;
  cfg.random_trials = 10;
  const EvalReport r = evaluate_model(model, ds, Split::Test, cfg);
  EXPECT_EQ(r.metrics->threshold, 0.64);
  EXPECT_EQ(r.threshold_source, "fixed");
  cfg.ks = {0};
  EXPECT_THROW(evaluate_model(model, ds, Split::Test, cfg), ValidationError);
}
