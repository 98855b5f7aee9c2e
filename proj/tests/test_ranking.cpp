#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cograsp/errors.hpp"
#include "cograsp/random.hpp"
#include "cograsp/ranking.hpp"

using namespace cograsp;
using nn::Tensor;

namespace {

using DcSets = std::vector<std::vector<std::size_t>>;

Tensor random_unit_rows(std::size_t m, std::size_t d, Rng& rng) {
  Tensor t({m, d});
  for (std::size_t i = 0; i < m; ++i) {
    double n = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      t.at(i, k) = rng.normal();
      n += t.at(i, k) * t.at(i, k);
    }
    for (std::size_t k = 0; k < d; ++k) t.at(i, k) /= std::sqrt(n);
  }
  return t;
}

AffinityMatrix from_rows(const std::vector<std::vector<double>>& rows) {
  AffinityMatrix a;
  a.m = rows.size();
  for (const auto& r : rows) a.values.insert(a.values.end(), r.begin(), r.end());
  return a;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Pairwise concordance count, ties counted half.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& l) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] != 1 || l[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

double binomial(double n, double k) {
  double r = 1.0;
  for (double i = 0; i < k; ++i) r *= (n - i) / (i + 1.0);
  return r;
}

}  // namespace

TEST(AffinityMatrix, DotProductsWithMaskedDiagonal) {
  Rng rng(1);
  const Tensor c = random_unit_rows(7, 5, rng);
  const Tensor x = random_unit_rows(7, 5, rng);
  const AffinityMatrix a = affinity_matrix(c, x);
  ASSERT_EQ(a.m, 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      if (i == j) {
        EXPECT_TRUE(a.masked(i, j));
        continue;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += c.at(i, k) * x.at(j, k);
      EXPECT_NEAR(a.at(i, j), s, 1e-12);
    }
  }
  const Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const AffinityMatrix id = affinity_matrix(eye, eye);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) EXPECT_EQ(id.at(i, j), 0.0);
    }
  }
  const Tensor two_c({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor two_x({2, 2}, {0.0, 1.0, 0.9, std::sqrt(1.0 - 0.81)});
  EXPECT_NEAR(affinity_matrix(two_c, two_x).at(0, 1), 0.9, 1e-15);
  EXPECT_THROW(affinity_matrix(two_c, eye), ShapeMismatch);
}

TEST(MaskInadmissible, SharedGraspPointsAndOverlaps) {
  const std::vector<GraspConfiguration> g = {
      {{0.0, 0.0}, {0.5, 0.0}, 0}, {{0.0, 2.0}, {0.5, 2.0}, 0}, {{3.0, 0.0}, {2.5, 0.0}, 1}, {{3.2, 0.0}, {2.5, 0.3}, 2}};
  AffinityMatrix a = from_rows({{-kInf, 1, 1, 1}, {1, -kInf, 1, 1}, {1, 1, -kInf, 1}, {1, 1, 1, -kInf}});
  mask_inadmissible(a, g, 0.3);
  EXPECT_TRUE(a.masked(0, 1));
  EXPECT_TRUE(a.masked(1, 0));
  EXPECT_TRUE(a.masked(2, 3));  // bases 0.2 apart
  EXPECT_FALSE(a.masked(0, 2));
  EXPECT_EQ(unmasked_pairs(a).size(), 8u);
}

TEST(SelectBest, ExamplesAndTieRule) {
  EXPECT_EQ(select_best(from_rows({{-kInf, 0.9}, {0.3, -kInf}})), PairIndex(0, 1));
  EXPECT_EQ(select_best(from_rows({{-kInf, 0.2, 0.2}, {0.2, -kInf, 0.2}, {0.2, 0.2, -kInf}})), PairIndex(0, 1));
  EXPECT_EQ(select_best(from_rows({{-kInf, 0.1, 0.5}, {0.5, -kInf, 0.2}, {0.0, 0.5, -kInf}})), PairIndex(0, 2));
  EXPECT_THROW(select_best(from_rows({{-kInf}})), ValidationError);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const AffinityMatrix a = affinity_matrix(random_unit_rows(20, 4, rng), random_unit_rows(20, 4, rng));
    PairIndex best{0, 1};
    for (std::size_t i = 0; i < 20; ++i) {
      for (std::size_t j = 0; j < 20; ++j) {
        if (i != j && a.at(i, j) > a.at(best.first, best.second)) best = {i, j};
      }
    }
    EXPECT_EQ(select_best(a), best);
  }
}

TEST(TopKPairs, MatchesFullSort) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    AffinityMatrix a = affinity_matrix(random_unit_rows(9, 3, rng), random_unit_rows(9, 3, rng));
    // Quantize to force ties.
    for (auto& v : a.values) {
      if (std::isfinite(v)) v = std::round(v * 4.0) / 4.0;
    }
    std::vector<std::tuple<double, std::size_t, std::size_t>> all;
    for (std::size_t i = 0; i < 9; ++i) {
      for (std::size_t j = 0; j < 9; ++j) {
        if (i != j) all.emplace_back(-a.at(i, j), i, j);
      }
    }
    std::sort(all.begin(), all.end());
    for (std::size_t k : {1u, 3u, 5u, 17u}) {
      const auto top = top_k_pairs(a, k);
      ASSERT_EQ(top.size(), k);
      for (std::size_t r = 0; r < k; ++r) {
        EXPECT_EQ(top[r], PairIndex(std::get<1>(all[r]), std::get<2>(all[r])));
      }
    }
    EXPECT_EQ(top_k_pairs(a, 1).front(), select_best(a));
    EXPECT_EQ(top_k_pairs(a, 1000).size(), 72u);

    // Shifting every unmasked entry leaves the ranking unchanged.
    AffinityMatrix shifted = a;
    for (auto& v : shifted.values) {
      if (std::isfinite(v)) v += 0.375;
    }
    EXPECT_EQ(top_k_pairs(shifted, 10), top_k_pairs(a, 10));
  }
  EXPECT_THROW(top_k_pairs(from_rows({{-kInf, 1}, {1, -kInf}}), 0), ValidationError);
}

TEST(TopKSuccess, CraftedAndMonotone) {
  const AffinityMatrix a = from_rows({{-kInf, 0.9, 0.1, 0.2},
                                      {0.8, -kInf, 0.3, 0.05},
                                      {0.7, 0.0, -kInf, 0.6},
                                      {0.4, 0.5, 0.35, -kInf}});
  // Ranked: (0,1) 0.9, (1,0) 0.8, (2,0) 0.7, (2,3) 0.6, ...
  const DcSets dc{{}, {}, {0}, {}};
  EXPECT_FALSE(top_k_success(a, dc, 1));
  EXPECT_FALSE(top_k_success(a, dc, 2));
  EXPECT_TRUE(top_k_success(a, dc, 3));
  EXPECT_TRUE(top_k_success(a, dc, 5));
  EXPECT_FALSE(top_k_success(a, DcSets(4), 12));
  EXPECT_TRUE(top_k_success(a, DcSets{{1}, {}, {}, {}}, 1));

  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const AffinityMatrix r = affinity_matrix(random_unit_rows(6, 3, rng), random_unit_rows(6, 3, rng));
    DcSets labels(6);
    labels[rng.below(6)].push_back(rng.below(6));
    bool prev = false;
    for (std::size_t k = 1; k <= 30; ++k) {
      const bool now = top_k_success(r, labels, k);
      EXPECT_TRUE(now || !prev);
      prev = now;
    }
  }
}

TEST(ClassificationMetrics, HandCountedFixtures) {
  struct Fixture {
    std::vector<double> scores;
    std::vector<int> labels;
    double threshold;
    std::size_t tp, fp, tn, fn;
  };
  const std::vector<Fixture> fixtures = {
      {{0.9, 0.8, 0.2, 0.1}, {1, 0, 0, 1}, 0.5, 1, 1, 1, 1},
      {{0.9, 0.7, 0.3, 0.1}, {1, 1, 0, 0}, 0.5, 2, 0, 2, 0},
      {{0.64, 0.63, 0.65, 0.2, 0.9}, {1, 1, 0, 0, 1}, 0.64, 2, 1, 1, 1},
      {{0.1, 0.2, 0.3}, {1, 1, 0}, 0.5, 0, 0, 1, 2},
      {{0.6, 0.7, 0.8, 0.9, 0.55, 0.4}, {0, 0, 1, 1, 1, 0}, 0.5, 3, 2, 1, 0},
      {{0.5, 0.5, 0.5}, {1, 0, 1}, 0.5, 2, 1, 0, 0},
  };
  for (const auto& f : fixtures) {
    const MetricsReport r = classification_metrics(f.scores, f.labels, f.threshold);
    EXPECT_EQ(r.true_positive, f.tp);
    EXPECT_EQ(r.false_positive, f.fp);
    EXPECT_EQ(r.true_negative, f.tn);
    EXPECT_EQ(r.false_negative, f.fn);
    const double n = static_cast<double>(f.scores.size());
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(f.tp + f.tn) / n);
    const double p = f.tp + f.fp == 0 ? 0.0 : static_cast<double>(f.tp) / static_cast<double>(f.tp + f.fp);
    const double rc = f.tp + f.fn == 0 ? 0.0 : static_cast<double>(f.tp) / static_cast<double>(f.tp + f.fn);
    EXPECT_DOUBLE_EQ(r.precision, p);
    EXPECT_DOUBLE_EQ(r.recall, rc);
    EXPECT_NEAR(r.f1, p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0, 1e-15);
  }
  const MetricsReport first = classification_metrics(fixtures[0].scores, fixtures[0].labels, 0.5);
  EXPECT_EQ(first.accuracy, 0.5);
  EXPECT_EQ(first.precision, 0.5);
  EXPECT_EQ(first.recall, 0.5);
  EXPECT_EQ(first.f1, 0.5);
  EXPECT_DOUBLE_EQ(*first.auc_roc, 0.5);

  const MetricsReport sep = classification_metrics(fixtures[1].scores, fixtures[1].labels, 0.5);
  EXPECT_EQ(sep.accuracy, 1.0);
  EXPECT_EQ(*sep.auc_roc, 1.0);
  EXPECT_EQ(*classification_metrics(std::vector{0.9, 0.1}, std::vector{1, 0}, 0.5).auc_roc, 1.0);

  EXPECT_FALSE(classification_metrics(std::vector{0.9, 0.1}, std::vector{1, 1}, 0.5).auc_roc.has_value());
  EXPECT_THROW(auc_roc(std::vector{0.9, 0.1}, std::vector{0, 0}), DegenerateLabels);
  EXPECT_THROW(classification_metrics(std::vector{0.9}, std::vector{1, 0}, 0.5), ValidationError);
}

TEST(AucRoc, MatchesPairwiseOracleAndIsRankInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.below(60);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 20.0) / 20.0;  // ties likely
      l[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    l[0] = 1;
    l[1] = 0;
    const double auc = auc_roc(s, l);
    EXPECT_NEAR(auc, auc_oracle(s, l), 1e-12);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    EXPECT_NEAR(auc_roc(t, l), auc, 1e-12);
  }
}

TEST(BestThreshold, SeparableAndGridSweep) {
  EXPECT_DOUBLE_EQ(best_threshold_by_f1(std::vector{0.1, 0.2, 0.8, 0.9}, std::vector{0, 0, 1, 1}), 0.5);
  // Gap between 0.3 and 0.6 separates; the midpoint there is 0.45.
  EXPECT_DOUBLE_EQ(best_threshold_by_f1(std::vector{0.3, 0.6, 0.95, 0.1}, std::vector{0, 1, 1, 0}), 0.45);
  EXPECT_THROW(best_threshold_by_f1(std::vector{0.3, 0.6}, std::vector{1, 1}), DegenerateLabels);

  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 10 + rng.below(40);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = rng.uniform() < 0.4 ? 1 : 0;
      s[i] = std::round((0.5 * rng.uniform() + 0.3 * l[i]) * 100.0) / 100.0 + 0.001;
    }
    l[0] = 1;
    l[1] = 0;
    const double t = best_threshold_by_f1(s, l);
    double grid_best = -1.0;
    double grid_t = 0.0;
    for (int g = 0; g <= 10000; ++g) {
      const double gt = g * 1e-4;
      const double f1 = classification_metrics(s, l, gt).f1;
      // Equal F1 from different confusion counts can differ in the last bit.
      if (f1 > grid_best + 1e-12) {
        grid_best = f1;
        grid_t = gt;
      }
    }
    const MetricsReport at_t = classification_metrics(s, l, t);
    const MetricsReport at_grid = classification_metrics(s, l, grid_t);
    EXPECT_NEAR(at_t.f1, grid_best, 1e-12);
    EXPECT_EQ(at_t.true_positive, at_grid.true_positive);
    EXPECT_EQ(at_t.false_positive, at_grid.false_positive);
    // The grid maximizer is the first grid point above the lower score of
    // the chosen gap, so it lies at most one step above that score.
    double lower = -1.0;
    for (double v : s) {
      if (v < t) lower = std::max(lower, v);
    }
    EXPECT_GT(grid_t, lower);
    EXPECT_LE(grid_t, lower + 1e-4 + 1e-12);
  }
}

TEST(RandomBaseline, ExactAndAnalytic) {
  EXPECT_EQ(random_baseline(4, DcSets(4), 3, 1000, 1), 0.0);
  DcSets all(4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i != j) all[i].push_back(j);
    }
  }
  EXPECT_EQ(random_baseline(4, all, 1, 1000, 1), 1.0);

  // 2 feasible ordered pairs out of 12.
  const DcSets two{{1}, {}, {3}, {}};
  for (std::size_t k : {1u, 3u, 5u}) {
    const double analytic = 1.0 - binomial(10, static_cast<double>(k)) / binomial(12, static_cast<double>(k));
    EXPECT_NEAR(random_baseline(4, two, k, 100000, 17), analytic, 0.01) << "k = " << k;
  }
  EXPECT_NEAR(1.0 - binomial(10, 1) / binomial(12, 1), 1.0 / 6.0, 1e-15);

  // Restricting the candidate pool changes the rate to 1 of 3.
  const std::vector<PairIndex> pool{{0, 1}, {0, 2}, {1, 2}};
  EXPECT_NEAR(random_baseline(4, two, 1, 100000, 3, pool), 1.0 / 3.0, 0.01);
  EXPECT_THROW(random_baseline(4, two, 1, 0, 3), ValidationError);
}

TEST(AffinityTensor, ReducesToSelectBestForPairs) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + rng.below(9);
    const Tensor c = random_unit_rows(m, 4, rng);
    const Tensor x = random_unit_rows(m, 4, rng);
    const TensorChoice t = affinity_tensor_best(c, x, 2);
    const PairIndex best = select_best(affinity_matrix(c, x));
    EXPECT_EQ(t.center, best.first);
    ASSERT_EQ(t.contexts.size(), 1u);
    EXPECT_EQ(t.contexts[0], best.second);
  }
}

TEST(AffinityTensor, AverageOfTwoBestContexts) {
  const double s9 = std::sqrt(1.0 - 0.81);
  const double s8 = std::sqrt(1.0 - 0.64);
  const double s1 = std::sqrt(1.0 - 0.01);
  const Tensor c({4, 2}, {1, 0, -1, 0, -1, 0, -1, 0});
  const Tensor x({4, 2}, {0, 1, 0.9, s9, 0.8, s8, 0.1, s1});
  const TensorChoice t = affinity_tensor_best(c, x, 3);
  EXPECT_EQ(t.center, 0u);
  EXPECT_EQ(t.contexts, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(t.score, 0.85, 1e-12);
  EXPECT_THROW(affinity_tensor_best(c, x, 1), ValidationError);
  EXPECT_THROW(affinity_tensor_best(c, x, 5), ValidationError);
}

TEST(AffinityTensor, GreedyEqualsExhaustive) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor c = random_unit_rows(8, 4, rng);
    const Tensor x = random_unit_rows(8, 4, rng);
    const TensorChoice e = affinity_tensor_best(c, x, 3, TensorSearch::Exhaustive);
    const TensorChoice g = affinity_tensor_best(c, x, 3, TensorSearch::Greedy);
    EXPECT_EQ(e.center, g.center);
    EXPECT_EQ(e.contexts, g.contexts);
    EXPECT_EQ(e.score, g.score);
    // Independent triple loop.
    double best = -kInf;
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t a = 0; a < 8; ++a) {
        for (std::size_t b = a + 1; b < 8; ++b) {
          if (a == i || b == i) continue;
          double da = 0.0, db = 0.0;
          for (std::size_t k = 0; k < 4; ++k) {
            da += c.at(i, k) * x.at(a, k);
            db += c.at(i, k) * x.at(b, k);
          }
          best = std::max(best, 0.5 * (da + db));
        }
      }
    }
    EXPECT_NEAR(e.score, best, 1e-12);
  }
}
