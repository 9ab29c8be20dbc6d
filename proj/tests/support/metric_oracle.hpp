#pragma once

// Brute-force evaluator: every label/IoU test by pixel loops, every matching
// by full enumeration. Instances live on a 4×4 canvas so enumeration stays
// cheap.

#include <algorithm>
#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ivsg/metrics/metrics.hpp"
#include "oracles.hpp"

namespace metric_oracle {

using namespace ivsg;

constexpr int kH = 4, kW = 4;

inline InteractionTracklet triplet(int s, int o, int p, MaskTube sub, MaskTube obj, double conf = 1.0) {
  InteractionTracklet t;
  t.subject_class = s;
  t.object_class = o;
  t.predicate_class = p;
  t.subject_tube = std::move(sub);
  t.object_tube = std::move(obj);
  t.confidence = conf;
  return t;
}

inline test_oracles::DenseTube dense(const MaskTube& t) {
  test_oracles::DenseTube d{t.t_start, {}};
  for (const auto& m : t.masks) d.frames.push_back(rle_decode(m));
  return d;
}

inline double brute_recall(const std::vector<InteractionTracklet>& pred, const std::vector<InteractionTracklet>& gt,
                           std::size_t limit, double tau, bool labels) {
  if (gt.empty()) return 1.0;
  std::vector<std::vector<bool>> ok(std::min(limit, pred.size()), std::vector<bool>(gt.size()));
  for (std::size_t p = 0; p < ok.size(); ++p)
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const bool same = pred[p].subject_class == gt[g].subject_class && pred[p].object_class == gt[g].object_class &&
                        pred[p].predicate_class == gt[g].predicate_class;
      ok[p][g] = (!labels || same) &&
                 test_oracles::naive_tube_iou(dense(pred[p].subject_tube), dense(gt[g].subject_tube), kH, kW) >= tau &&
                 test_oracles::naive_tube_iou(dense(pred[p].object_tube), dense(gt[g].object_tube), kH, kW) >= tau;
    }
  return static_cast<double>(test_oracles::brute_force_max_matching(ok)) / static_cast<double>(gt.size());
}

inline std::optional<double> brute_plr_frame(const metrics::PlrFrame& f) {
  std::vector<Bitmap> objs;
  for (const auto& m : f.objects) {
    Bitmap b = rle_decode(m);
    if (std::count(b.data.begin(), b.data.end(), 1) > 0) objs.push_back(std::move(b));
  }
  if (objs.empty()) return std::nullopt;
  if (f.points.empty()) return 0.0;
  auto inside = [](Point2 p, const Bitmap& b) {
    const int c = std::min(static_cast<int>(p.x * b.width), b.width - 1);
    const int r = std::min(static_cast<int>(p.y * b.height), b.height - 1);
    return b.at(r, c) != 0;
  };
  auto dist = [&](std::size_t o, std::size_t p) {
    double sx = 0, sy = 0, n = 0;
    for (int r = 0; r < objs[o].height; ++r)
      for (int c = 0; c < objs[o].width; ++c)
        if (objs[o].at(r, c)) sx += (c + 0.5) / objs[o].width, sy += (r + 0.5) / objs[o].height, ++n;
    const double dx = f.points[p].x - sx / n, dy = f.points[p].y - sy / n;
    return dx * dx + dy * dy;
  };
  const bool objects_are_rows = objs.size() <= f.points.size();
  const std::size_t rows = objects_are_rows ? objs.size() : f.points.size();
  const std::size_t cols = objects_are_rows ? f.points.size() : objs.size();
  std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) cost[r][c] = objects_are_rows ? dist(r, c) : dist(c, r);
  const auto [best, assign] = test_oracles::brute_force_assignment(cost);
  int hits = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(assign[r]);
    hits += objects_are_rows ? inside(f.points[c], objs[r]) : inside(f.points[r], objs[c]);
  }
  return static_cast<double>(hits) / static_cast<double>(rows);
}

inline MaskTube random_tube(std::mt19937_64& rng) {
  const int start = static_cast<int>(rng() % 2), len = 1 + static_cast<int>(rng() % 2);
  MaskTube t{start, start + len - 1, {}};
  for (int i = 0; i < len; ++i) t.masks.push_back(rle_encode(test_oracles::random_bitmap(rng, kH, kW)));
  return t;
}

/// Draws one random instance and compares the library against the brute
/// force. Returns an empty string on agreement, else what differed.
inline std::string check_random_instance(std::mt19937_64& rng) {
  // Few classes and near-copies so matches actually occur.
  std::vector<InteractionTracklet> gt, pred;
  const int n_gt = static_cast<int>(rng() % 4), n_pred = static_cast<int>(rng() % 5);
  for (int i = 0; i < n_gt; ++i)
    gt.push_back(triplet(static_cast<int>(rng() % 2), static_cast<int>(rng() % 2), static_cast<int>(rng() % 2),
                         random_tube(rng), random_tube(rng)));
  for (int i = 0; i < n_pred; ++i) {
    InteractionTracklet p =
        !gt.empty() && rng() % 2 ? gt[rng() % gt.size()] : triplet(0, 0, 0, random_tube(rng), random_tube(rng));
    if (rng() % 3 == 0) p.predicate_class = static_cast<int>(rng() % 2);
    if (rng() % 3 == 0) p.object_tube = random_tube(rng);
    p.confidence = 1.0 - 0.1 * i;
    pred.push_back(std::move(p));
  }
  const double tau = std::array{0.3, 0.5, 1.0}[rng() % 3];
  for (int k = 1; k <= 4; ++k)
    if (metrics::recall_at_k(pred, gt, k, tau) != brute_recall(pred, gt, static_cast<std::size_t>(k), tau, true))
      return "R@" + std::to_string(k);
  const double s = metrics::spir(pred, gt, tau);
  if (s != brute_recall(pred, gt, pred.size(), tau, false)) return "SpIR";
  if (metrics::recall_at_k(pred, gt, 4, tau) > s) return "R@4 > SpIR";

  metrics::PlrFrame f;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n_pred; ++i) f.points.push_back({u(rng), u(rng)});
  // Ground-truth objects of one frame are disjoint entities.
  std::vector<Bitmap> objs(static_cast<std::size_t>(n_gt), Bitmap(kH, kW));
  for (int px = 0; px < kH * kW && n_gt > 0; ++px) {
    const auto owner = rng() % static_cast<std::uint64_t>(n_gt + 1);
    if (owner < objs.size()) objs[owner].data[static_cast<std::size_t>(px)] = 1;
  }
  for (const auto& b : objs) f.objects.push_back(rle_encode(b));
  if (metrics::plr_frame(f) != brute_plr_frame(f)) return "PLR";
  return {};
}

}  // namespace metric_oracle
