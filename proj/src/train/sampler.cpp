#include "ivsg/train/sampler.hpp"

#include <cmath>
#include <limits>

#include "ivsg/core/error.hpp"

namespace ivsg::train {

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  auto meet = [&](int q, int p) { return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p)); };
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = meet(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  d.resize(n);
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> distance_transform(const Bitmap& mask) {
  // One-pixel background frame around the image stands in for the border.
  const int h = mask.height + 2, w = mask.width + 2;
  const double inf = 1e12;  // far above any squared in-image distance, still exact
  std::vector<double> grid(static_cast<std::size_t>(h) * w, 0.0);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (mask.at(r, c)) grid[static_cast<std::size_t>(r + 1) * w + c + 1] = inf;
  std::vector<double> f, d;
  f.resize(h);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[r] = grid[static_cast<std::size_t>(r) * w + c];
    edt_1d(f, d);
    for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = d[r];
  }
  f.resize(w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f[c] = grid[static_cast<std::size_t>(r) * w + c];
    edt_1d(f, d);
    for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = d[c];
  }
  std::vector<double> out(static_cast<std::size_t>(mask.height) * mask.width, 0.0);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      out[static_cast<std::size_t>(r) * mask.width + c] = std::sqrt(grid[static_cast<std::size_t>(r + 1) * w + c + 1]);
  return out;
}

Point2 sample_gt_point(const BinaryMask& mask, std::mt19937_64& rng) {
  if (mask.is_empty()) throw ContractError("cannot sample a point from an empty mask");
  const Bitmap b = rle_decode(mask);
  const auto d = distance_transform(b);
  std::discrete_distribution<std::size_t> pick(d.begin(), d.end());
  const std::size_t i = pick(rng);
  return pixel_center(static_cast<int>(i) / b.width, static_cast<int>(i) % b.width, b.height, b.width);
}

Point2 sample_uniform_point(const BinaryMask& mask, std::mt19937_64& rng) {
  const std::size_t area = mask.area();
  if (area == 0) throw ContractError("cannot sample a point from an empty mask");
  std::size_t k = std::uniform_int_distribution<std::size_t>(0, area - 1)(rng);
  // Walk the runs to the k-th foreground pixel.
  std::size_t pos = 0;
  const auto& runs = mask.runs();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i % 2 == 1) {
      if (k < runs[i]) {
        pos += k;
        break;
      }
      k -= runs[i];
    }
    pos += runs[i];
  }
  return pixel_center(static_cast<int>(pos) / mask.width(), static_cast<int>(pos) % mask.width(), mask.height(),
                      mask.width());
}

}  // namespace ivsg::train
