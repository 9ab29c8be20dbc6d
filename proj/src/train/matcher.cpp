#include "ivsg/train/matcher.hpp"

#include <cmath>
#include <limits>

#include "ivsg/core/error.hpp"

namespace ivsg::train {

MatchResult hungarian_match(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = n == 0 ? 0 : static_cast<int>(cost[0].size());
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != m) throw ContractError("cost matrix rows differ in length");
    for (double c : row)
      if (!std::isfinite(c)) throw ContractError("cost matrix entries must be finite");
  }
  if (n > m) throw ContractError("more ground-truth interactions than queries");

  MatchResult result;
  if (n > 0) {
    // Shortest augmenting paths with row/column potentials, 1-based.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> owner(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
      owner[0] = i;
      int j0 = 0;
      std::vector<double> minv(m + 1, inf);
      std::vector<bool> used(m + 1, false);
      do {
        used[j0] = true;
        const int i0 = owner[j0];
        double delta = inf;
        int j1 = 0;
        for (int j = 1; j <= m; ++j) {
          if (used[j]) continue;
          const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
        for (int j = 0; j <= m; ++j) {
          if (used[j]) {
            u[owner[j]] += delta;
            v[j] -= delta;
          } else {
            minv[j] -= delta;
          }
        }
        j0 = j1;
      } while (owner[j0] != 0);
      do {
        const int j1 = way[j0];
        owner[j0] = owner[j1];
        j0 = j1;
      } while (j0);
    }
    result.assignment.assign(n, -1);
    for (int j = 1; j <= m; ++j)
      if (owner[j]) result.assignment[owner[j] - 1] = j - 1;
  }
  std::vector<bool> taken(m, false);
  for (int r = 0; r < n; ++r) {
    taken[result.assignment[r]] = true;
    result.total_cost += cost[r][result.assignment[r]];
  }
  for (int j = 0; j < m; ++j)
    if (!taken[j]) result.unmatched_queries.push_back(j);
  return result;
}

void LossWeights::validate() const {
  for (double w : {bce, dice, iou, l2, sub, obj, rel})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("loss weights must be finite and non-negative");
}

namespace {

double neg_log_softmax(const nn::Mat& logits, int index) {
  if (index < 0 || index >= logits.cols()) throw ContractError("class index out of range");
  const double mx = logits.maxCoeff();
  return std::log((logits.array() - mx).exp().sum()) + mx - logits(0, index);
}

}  // namespace

double match_cost(Point2 target, Point2 predicted, const nn::Mat& object_logits, int object_class,
                  const nn::Mat& predicate_logits, int predicate_class, const LossWeights& w) {
  const double dx = predicted.x - target.x, dy = predicted.y - target.y;
  return w.l2 * (dx * dx + dy * dy) + w.obj * neg_log_softmax(object_logits, object_class) +
         w.rel * neg_log_softmax(predicate_logits, predicate_class);
}

}  // namespace ivsg::train
