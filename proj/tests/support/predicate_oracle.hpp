#pragma once

// Standalone re-derivation of interaction labels from entity masks alone.

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "ivsg/core/mask.hpp"

namespace test_oracles {

struct LabeledRun {
  int subject, object, predicate, t_start, t_end;
  bool operator==(const LabeledRun&) const = default;
};

// rules: names in priority order ("touching", "above", "below", "left_of",
// "right_of", "near"). A pair is in range if touching or centroid distance
// < near_radius.
inline std::vector<LabeledRun> derive_runs(const std::vector<std::vector<ivsg::Bitmap>>& masks,
                                           const std::vector<std::string>& rules, double near_radius) {
  const int n = static_cast<int>(masks.size());
  const int frames = n ? static_cast<int>(masks[0].size()) : 0;
  auto centroid = [](const ivsg::Bitmap& b, double& r, double& c) {
    double sr = 0, sc = 0, k = 0;
    for (int y = 0; y < b.height; ++y)
      for (int x = 0; x < b.width; ++x)
        if (b.data[y * b.width + x]) {
          sr += y + 0.5;
          sc += x + 0.5;
          k += 1;
        }
    r = sr / k;
    c = sc / k;
    return k > 0;
  };
  auto touching = [](const ivsg::Bitmap& a, const ivsg::Bitmap& b) {
    // Dilate a by one pixel (8-neighbourhood) and intersect with b.
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        if (!b.data[y * b.width + x]) continue;
        for (int yy = std::max(0, y - 1); yy <= std::min(a.height - 1, y + 1); ++yy)
          for (int xx = std::max(0, x - 1); xx <= std::min(a.width - 1, x + 1); ++xx)
            if (a.data[yy * a.width + xx]) return true;
      }
    return false;
  };
  std::vector<LabeledRun> runs;
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < n; ++o) {
      if (s == o) continue;
      std::vector<int> label(frames, -1);
      for (int t = 0; t < frames; ++t) {
        double sr, sc, orow, oc;
        if (!centroid(masks[s][t], sr, sc) || !centroid(masks[o][t], orow, oc)) continue;
        const bool touch = touching(masks[s][t], masks[o][t]);
        const double d = std::sqrt((sr - orow) * (sr - orow) + (sc - oc) * (sc - oc));
        if (!touch && d >= near_radius) continue;
        for (std::size_t i = 0; i < rules.size(); ++i) {
          const auto& r = rules[i];
          const bool holds = (r == "touching" && touch) || (r == "above" && sr < orow) || (r == "below" && sr > orow) ||
                             (r == "left_of" && sc < oc) || (r == "right_of" && sc > oc) || r == "near";
          if (holds) {
            label[t] = static_cast<int>(i);
            break;
          }
        }
      }
      for (int t = 0; t < frames;) {
        if (label[t] < 0) {
          ++t;
          continue;
        }
        int e = t;
        while (e + 1 < frames && label[e + 1] == label[t]) ++e;
        runs.push_back({s, o, label[t], t, e});
        t = e + 1;
      }
    }
  return runs;
}

}  // namespace test_oracles
