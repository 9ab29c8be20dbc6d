#pragma once

// Independent reference implementations used by unit and acceptance tests.
// Deliberately naive: pixel loops, full enumeration, no shared code paths
// with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "ivsg/core/mask.hpp"

namespace test_oracles {

inline ivsg::Bitmap random_bitmap(std::mt19937_64& rng, int h, int w) {
  ivsg::Bitmap b(h, w);
  const double density = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  for (auto& v : b.data) v = std::bernoulli_distribution(density)(rng) ? 1 : 0;
  return b;
}

inline double naive_iou(const ivsg::Bitmap& a, const ivsg::Bitmap& b) {
  long inter = 0, uni = 0;
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c) {
      const bool x = a.data[r * a.width + c] != 0;
      const bool y = b.data[r * b.width + c] != 0;
      inter += (x && y);
      uni += (x || y);
    }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Dense tube: frame -> bitmap, window [start, start + frames.size()).
struct DenseTube {
  int start = 0;
  std::vector<ivsg::Bitmap> frames;
};

inline double naive_tube_iou(const DenseTube& a, const DenseTube& b, int h, int w) {
  const int t0 = std::min(a.start, b.start);
  const int t1 = std::max(a.start + static_cast<int>(a.frames.size()), b.start + static_cast<int>(b.frames.size()));
  long inter = 0, uni = 0;
  for (int t = t0; t < t1; ++t) {
    for (int p = 0; p < h * w; ++p) {
      const bool x = t >= a.start && t < a.start + static_cast<int>(a.frames.size()) && a.frames[t - a.start].data[p];
      const bool y = t >= b.start && t < b.start + static_cast<int>(b.frames.size()) && b.frames[t - b.start].data[p];
      inter += (x && y);
      uni += (x || y);
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Minimum-cost assignment of every row to a distinct column by trying every
/// permutation of the columns.
inline std::pair<double, std::vector<int>> brute_force_assignment(const std::vector<std::vector<double>>& cost) {
  const int rows = static_cast<int>(cost.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(cost[0].size());
  std::vector<int> perm(cols);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_assign;
  do {
    double total = 0.0;
    for (int r = 0; r < rows; ++r) total += cost[r][perm[r]];
    if (total < best) {
      best = total;
      best_assign.assign(perm.begin(), perm.begin() + rows);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best, best_assign};
}

/// Largest number of pairs (row, col) with ok[row][col], each row and column
/// used at most once, found by exhaustive search.
inline int brute_force_max_matching(const std::vector<std::vector<bool>>& ok, std::size_t row = 0,
                                    std::vector<bool>* used = nullptr) {
  std::vector<bool> local;
  if (!used) {
    local.assign(ok.empty() ? 0 : ok[0].size(), false);
    used = &local;
  }
  if (row == ok.size()) return 0;
  int best = brute_force_max_matching(ok, row + 1, used);  // leave row unmatched
  for (std::size_t c = 0; c < ok[row].size(); ++c) {
    if (!ok[row][c] || (*used)[c]) continue;
    (*used)[c] = true;
    best = std::max(best, 1 + brute_force_max_matching(ok, row + 1, used));
    (*used)[c] = false;
  }
  return best;
}

}  // namespace test_oracles
