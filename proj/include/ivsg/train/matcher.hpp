#pragma once

#include <vector>

#include "ivsg/core/mask.hpp"
#include "ivsg/nn/graph.hpp"

namespace ivsg::train {

struct MatchResult {
  std::vector<int> assignment;         // ground-truth index -> query index
  std::vector<int> unmatched_queries;  // ascending
  double total_cost = 0.0;
};

/// Exact minimum-cost assignment of every row (ground truth) to a distinct
/// column (query). Throws ContractError when rows > columns or a cost is not
/// finite.
MatchResult hungarian_match(const std::vector<std::vector<double>>& cost);

struct LossWeights {
  double bce = 10.0;
  double dice = 1.0;
  double iou = 1.0;
  double l2 = 20.0;
  double sub = 10.0;
  double obj = 10.0;
  double rel = 20.0;

  /// Throws ContractError on a negative or non-finite weight.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// l2·‖p̂ − p*‖² + obj·(−log p_obj[gt]) + rel·(−log p_rel[gt]); the
/// probabilities are softmaxes of the given 1×n logit rows.
double match_cost(Point2 target, Point2 predicted, const nn::Mat& object_logits, int object_class,
                  const nn::Mat& predicate_logits, int predicate_class, const LossWeights& weights);

}  // namespace ivsg::train
