#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cograsp/nn_core.hpp"
#include "cograsp/scenario.hpp"

namespace cograsp {

using PairIndex = std::pair<std::size_t, std::size_t>;

/// Row = center index, column = context index. Masked entries are -inf.
struct AffinityMatrix {
  std::size_t m = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * m + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * m + j]; }
  bool masked(std::size_t i, std::size_t j) const;
};

/// A = E_center E_context^T with the diagonal masked. Throws ShapeMismatch.
AffinityMatrix affinity_matrix(const nn::Tensor& e_center, const nn::Tensor& e_context);

/// Also masks pairs that share a grasp point or whose base discs overlap.
void mask_inadmissible(AffinityMatrix& a, const std::vector<GraspConfiguration>& grasps,
                       double base_footprint_radius);

/// Highest unmasked entry; ties go to the smallest (i, j). Requires m >= 2.
PairIndex select_best(const AffinityMatrix& a);

/// The k highest unmasked entries, descending, ties by smallest (i, j).
/// Returns fewer than k pairs when fewer are unmasked.
std::vector<PairIndex> top_k_pairs(const AffinityMatrix& a, std::size_t k);

/// True iff some (i, j) among the top k has j in dc_sets[i].
bool top_k_success(const AffinityMatrix& a, const std::vector<std::vector<std::size_t>>& dc_sets, std::size_t k);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when no label is positive
  double f1 = 0.0;         // 0 when precision + recall = 0
  std::optional<double> auc_roc;  // absent for single-class labels
  double threshold = 0.0;
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_negative = 0;
};

/// Predicted positive iff score >= threshold. Throws ValidationError on
/// differing lengths.
MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Mann-Whitney statistic with ties counted half. Throws DegenerateLabels
/// when only one class is present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// F1-maximizing threshold among midpoints of sorted unique scores; ties go
/// to the smallest. With a single unique score that score is returned.
/// Throws DegenerateLabels.
double best_threshold_by_f1(std::span<const double> scores, std::span<const int> labels);

/// Monte-Carlo success rate of k distinct ordered pairs drawn uniformly from
/// `candidates` (all i != j pairs when empty).
double random_baseline(std::size_t m, const std::vector<std::vector<std::size_t>>& dc_sets, std::size_t k,
                       std::size_t trials, std::uint64_t seed, std::span<const PairIndex> candidates = {});

/// Ordered pairs (i, j), i != j, left unmasked by `a`.
std::vector<PairIndex> unmasked_pairs(const AffinityMatrix& a);

enum class TensorSearch { Auto, Exhaustive, Greedy };

struct TensorChoice {
  std::size_t center = 0;
  std::vector<std::size_t> contexts;  // ascending
  double score = 0.0;
};

/// Maximizes the mean of e_context^l . e_center over N - 1 distinct contexts
/// other than the center. Auto searches exhaustively when m^(N-1) <= 1e6.
/// Ties go to the smallest center, then the lexicographically smallest set.
TensorChoice affinity_tensor_best(const nn::Tensor& e_center, const nn::Tensor& e_context, std::size_t n,
                                  TensorSearch search = TensorSearch::Auto);

}  // namespace cograsp
