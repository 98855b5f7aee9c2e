#include "cograsp/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cograsp/errors.hpp"
#include "cograsp/feasibility_dataset.hpp"
#include "cograsp/random.hpp"

namespace cograsp {

namespace {

constexpr double kMasked = -std::numeric_limits<double>::infinity();

struct Ranked {
  double value;
  std::size_t i, j;
};

bool ranks_before(const Ranked& a, const Ranked& b) {
  if (a.value != b.value) return a.value > b.value;
  if (a.i != b.i) return a.i < b.i;
  return a.j < b.j;
}

bool contains(const std::vector<std::size_t>& sorted, std::size_t v) {
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("labels must be 0 or 1");
  }
}

double dot_rows(const nn::Tensor& a, std::size_t i, const nn::Tensor& b, std::size_t j) {
  const std::size_t d = a.cols();
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += a.values[i * d + k] * b.values[j * d + k];
  return s;
}

}  // namespace

bool AffinityMatrix::masked(std::size_t i, std::size_t j) const { return at(i, j) == kMasked; }

AffinityMatrix affinity_matrix(const nn::Tensor& e_center, const nn::Tensor& e_context) {
  if (e_center.shape.size() != 2 || e_center.shape != e_context.shape) {
    throw ShapeMismatch("center embeddings " + nn::shape_string(e_center.shape) + " vs context " +
                        nn::shape_string(e_context.shape));
  }
  AffinityMatrix a;
  a.m = e_center.rows();
  a.values.assign(a.m * a.m, 0.0);
  for (std::size_t i = 0; i < a.m; ++i) {
    for (std::size_t j = 0; j < a.m; ++j) a.at(i, j) = i == j ? kMasked : dot_rows(e_center, i, e_context, j);
  }
  return a;
}

void mask_inadmissible(AffinityMatrix& a, const std::vector<GraspConfiguration>& grasps,
                       double base_footprint_radius) {
  if (grasps.size() != a.m) throw ShapeMismatch("grasp set size differs from affinity matrix");
  for (std::size_t i = 0; i < a.m; ++i) {
    for (std::size_t j = 0; j < a.m; ++j) {
      if (!admissible_pair(grasps, i, j, base_footprint_radius)) a.at(i, j) = kMasked;
    }
  }
}

PairIndex select_best(const AffinityMatrix& a) {
  if (a.m < 2) throw ValidationError("select_best needs at least two configurations");
  const auto top = top_k_pairs(a, 1);
  if (top.empty()) throw ValidationError("every pair is masked");
  return top.front();
}

std::vector<PairIndex> top_k_pairs(const AffinityMatrix& a, std::size_t k) {
  if (k == 0) throw ValidationError("k must be at least 1");
  std::vector<Ranked> all;
  for (std::size_t i = 0; i < a.m; ++i) {
    for (std::size_t j = 0; j < a.m; ++j) {
      if (i != j && !a.masked(i, j)) all.push_back({a.at(i, j), i, j});
    }
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
  std::vector<PairIndex> out;
  for (std::size_t r = 0; r < k; ++r) out.emplace_back(all[r].i, all[r].j);
  return out;
}

bool top_k_success(const AffinityMatrix& a, const std::vector<std::vector<std::size_t>>& dc_sets, std::size_t k) {
  if (dc_sets.size() != a.m) throw ShapeMismatch("label count differs from affinity matrix");
  for (const auto& [i, j] : top_k_pairs(a, k)) {
    if (contains(dc_sets[i], j)) return true;
  }
  return false;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const std::size_t n = scores.size();
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == n) throw DegenerateLabels("AUC needs both classes");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average 1-based ranks over tie groups.
  double rank_sum = 0.0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    const double rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t r = lo; r <= hi; ++r) {
      if (labels[order[r]] == 1) rank_sum += rank;
    }
    lo = hi + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(n - positives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_lengths(scores, labels);
  MetricsReport r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      ++(predicted ? r.true_positive : r.false_negative);
    } else {
      ++(predicted ? r.false_positive : r.true_negative);
    }
  }
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  r.accuracy = ratio(r.true_positive + r.true_negative, scores.size());
  r.precision = ratio(r.true_positive, r.true_positive + r.false_positive);
  r.recall = ratio(r.true_positive, r.true_positive + r.false_negative);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  const std::size_t positives = r.true_positive + r.false_negative;
  if (positives > 0 && positives < scores.size()) r.auc_roc = auc_roc(scores, labels);
  return r;
}

double best_threshold_by_f1(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  const std::size_t n = scores.size();
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == n) throw DegenerateLabels("threshold search needs both classes");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups upward; after group g the threshold sits between g and
  // the next group, so everything above is predicted positive.
  std::size_t below_pos = 0;
  std::size_t below_total = 0;
  double best_t = scores[order.front()];
  double best_f1 = -1.0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo;
    while (hi + 1 < n && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    for (std::size_t r = lo; r <= hi; ++r) below_pos += static_cast<std::size_t>(labels[order[r]]);
    below_total += hi - lo + 1;
    if (hi + 1 < n) {
      const double t = 0.5 * (scores[order[hi]] + scores[order[hi + 1]]);
      const std::size_t tp = positives - below_pos;
      const std::size_t predicted = n - below_total;
      const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(predicted + positives);
      if (f1 > best_f1) {
        best_f1 = f1;
        best_t = t;
      }
    }
    lo = hi + 1;
  }
  return best_t;
}

double random_baseline(std::size_t m, const std::vector<std::vector<std::size_t>>& dc_sets, std::size_t k,
                       std::size_t trials, std::uint64_t seed, std::span<const PairIndex> candidates) {
  if (trials == 0) throw ValidationError("trials must be at least 1");
  if (k == 0) throw ValidationError("k must be at least 1");
  if (dc_sets.size() != m) throw ShapeMismatch("label count differs from m");
  std::vector<PairIndex> pool(candidates.begin(), candidates.end());
  if (pool.empty()) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i != j) pool.emplace_back(i, j);
      }
    }
  }
  if (pool.empty()) return 0.0;
  std::vector<char> feasible(pool.size());
  std::size_t feasible_count = 0;
  for (std::size_t p = 0; p < pool.size(); ++p) {
    feasible[p] = contains(dc_sets.at(pool[p].first), pool[p].second) ? 1 : 0;
    feasible_count += static_cast<std::size_t>(feasible[p]);
  }
  if (feasible_count == 0) return 0.0;
  k = std::min(k, pool.size());
  if (feasible_count == pool.size()) return 1.0;

  Rng rng(seed);
  std::vector<std::size_t> idx(pool.size());
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    bool hit = false;
    for (std::size_t r = 0; r < k && !hit; ++r) {
      std::swap(idx[r], idx[r + rng.below(idx.size() - r)]);
      hit = feasible[idx[r]] != 0;
    }
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

std::vector<PairIndex> unmasked_pairs(const AffinityMatrix& a) {
  std::vector<PairIndex> out;
  for (std::size_t i = 0; i < a.m; ++i) {
    for (std::size_t j = 0; j < a.m; ++j) {
      if (i != j && !a.masked(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

namespace {

void consider(TensorChoice& best, bool& found, std::size_t center, const std::vector<std::size_t>& set,
              const std::vector<double>& dots) {
  double s = 0.0;
  for (std::size_t j : set) s += dots[j];
  s /= static_cast<double>(set.size());
  if (!found || s > best.score) {
    best = {center, set, s};
    found = true;
  }
}

}  // namespace

TensorChoice affinity_tensor_best(const nn::Tensor& e_center, const nn::Tensor& e_context, std::size_t n,
                                  TensorSearch search) {
  if (e_center.shape.size() != 2 || e_center.shape != e_context.shape) {
    throw ShapeMismatch("center and context embeddings differ in shape");
  }
  const std::size_t m = e_center.rows();
  if (n < 2) throw ValidationError("tensor order N must be at least 2");
  if (m < n) throw ValidationError("need at least N configurations");
  const std::size_t r = n - 1;
  if (search == TensorSearch::Auto) {
    search = std::pow(static_cast<double>(m), static_cast<double>(r)) <= 1e6 ? TensorSearch::Exhaustive
                                                                              : TensorSearch::Greedy;
  }

  TensorChoice best;
  bool found = false;
  std::vector<double> dots(m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t j = 0; j < m; ++j) dots[j] = dot_rows(e_center, c, e_context, j);
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != c) others.push_back(j);
    }
    if (search == TensorSearch::Greedy) {
      std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) { return dots[a] > dots[b]; });
      std::vector<std::size_t> set(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(r));
      std::sort(set.begin(), set.end());
      consider(best, found, c, set, dots);
      continue;
    }
    // Lexicographic walk over r-combinations of `others`.
    std::vector<std::size_t> pick(r);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::vector<std::size_t> set(r);
    while (true) {
      for (std::size_t l = 0; l < r; ++l) set[l] = others[pick[l]];
      consider(best, found, c, set, dots);
      std::size_t l = r;
      while (l > 0 && pick[l - 1] == others.size() - r + (l - 1)) --l;
      if (l == 0) break;
      ++pick[l - 1];
      for (std::size_t q = l; q < r; ++q) pick[q] = pick[q - 1] + 1;
    }
  }
  return best;
}

}  // namespace cograsp
