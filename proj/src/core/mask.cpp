#include "ivsg/core/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ivsg/core/error.hpp"

namespace ivsg {

std::size_t Bitmap::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint32_t> runs)
    : height_(height), width_(width), runs_(std::move(runs)) {}

BinaryMask BinaryMask::empty(int height, int width) {
  return BinaryMask(height, width, {static_cast<std::uint32_t>(height * width)});
}

std::size_t BinaryMask::area() const {
  std::size_t total = 0;
  for (std::size_t i = 1; i < runs_.size(); i += 2) total += runs_[i];
  return total;
}

BinaryMask rle_encode(const Bitmap& bitmap) {
  if (bitmap.height <= 0 || bitmap.width <= 0 || bitmap.data.empty())
    throw FormatError("cannot encode an empty grid");
  if (bitmap.data.size() != static_cast<std::size_t>(bitmap.height) * bitmap.width)
    throw FormatError("grid size does not match its dimensions");

  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (std::size_t i = 0; i < bitmap.data.size(); ++i) {
    const std::uint8_t v = bitmap.data[i];
    if (v > 1) throw FormatError("non-binary value " + std::to_string(v) + " at cell " + std::to_string(i));
    if (v != current) {
      runs.push_back(length);
      current = v;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return BinaryMask(bitmap.height, bitmap.width, std::move(runs));
}

Bitmap rle_decode(const BinaryMask& mask) {
  const auto expected = static_cast<std::uint64_t>(mask.height()) * static_cast<std::uint64_t>(mask.width());
  std::uint64_t sum = 0;
  for (auto r : mask.runs()) sum += r;
  if (mask.height() <= 0 || mask.width() <= 0 || sum != expected)
    throw FormatError("run lengths sum to " + std::to_string(sum) + ", expected " + std::to_string(expected));

  Bitmap out(mask.height(), mask.width());
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto r : mask.runs()) {
    if (value) std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(pos), r, std::uint8_t{1});
    pos += r;
    value ^= 1;
  }
  return out;
}

double bitmap_iou(const Bitmap& a, const Bitmap& b) {
  if (a.height != b.height || a.width != b.width)
    throw ContractError("mask_iou: dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] & b.data[i];
    uni += a.data[i] | b.data[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

// Intersection and union pixel counts by walking both run lists in lockstep.
std::pair<std::size_t, std::size_t> overlap_counts(const BinaryMask& a, const BinaryMask& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ContractError("mask dimension mismatch");
  const auto& ra = a.runs();
  const auto& rb = b.runs();
  std::size_t ia = 0, ib = 0;
  std::uint64_t left_a = ra.empty() ? 0 : ra[0], left_b = rb.empty() ? 0 : rb[0];
  std::uint8_t va = 0, vb = 0;
  std::size_t inter = 0, uni = 0;
  auto advance = [](const std::vector<std::uint32_t>& runs, std::size_t& idx, std::uint64_t& left, std::uint8_t& v) {
    while (left == 0 && idx + 1 < runs.size()) {
      ++idx;
      left = runs[idx];
      v ^= 1;
    }
  };
  advance(ra, ia, left_a, va);
  advance(rb, ib, left_b, vb);
  while (left_a > 0 && left_b > 0) {
    const std::uint64_t step = std::min(left_a, left_b);
    if (va & vb) inter += step;
    if (va | vb) uni += step;
    left_a -= step;
    left_b -= step;
    advance(ra, ia, left_a, va);
    advance(rb, ib, left_b, vb);
  }
  return {inter, uni};
}

}  // namespace

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  const auto [inter, uni] = overlap_counts(a, b);
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::pair<int, int> pixel_of(Point2 p, int height, int width) {
  int col = static_cast<int>(std::floor(p.x * width));
  int row = static_cast<int>(std::floor(p.y * height));
  col = std::clamp(col, 0, width - 1);
  row = std::clamp(row, 0, height - 1);
  return {row, col};
}

Point2 pixel_center(int row, int col, int height, int width) {
  return {(col + 0.5) / width, (row + 0.5) / height};
}

bool point_in_bitmap(Point2 p, const Bitmap& bitmap) {
  const auto [row, col] = pixel_of(p, bitmap.height, bitmap.width);
  return bitmap.at(row, col) != 0;
}

bool point_in_mask(Point2 p, const BinaryMask& mask) {
  const auto [row, col] = pixel_of(p, mask.height(), mask.width());
  const std::uint64_t target = static_cast<std::uint64_t>(row) * mask.width() + col;
  std::uint64_t pos = 0;
  std::uint8_t value = 0;
  for (auto r : mask.runs()) {
    if (target < pos + r) return value != 0;
    pos += r;
    value ^= 1;
  }
  return false;
}

BinaryMask MaskTube::at(int t, int height, int width) const {
  if (!covers(t) || masks.empty()) return BinaryMask::empty(height, width);
  return masks[static_cast<std::size_t>(t - t_start)];
}

void validate_tube(const MaskTube& tube, int clip_length) {
  if (tube.t_start < 0 || tube.t_start > tube.t_end || tube.t_end >= clip_length)
    throw ContractError("tube window [" + std::to_string(tube.t_start) + ", " + std::to_string(tube.t_end) +
                        "] outside clip of length " + std::to_string(clip_length));
  if (static_cast<int>(tube.masks.size()) != tube.length())
    throw ContractError("tube holds " + std::to_string(tube.masks.size()) + " masks for a window of " +
                        std::to_string(tube.length()) + " frames");
  for (const auto& m : tube.masks)
    if (m.height() != tube.masks.front().height() || m.width() != tube.masks.front().width())
      throw ContractError("tube masks differ in size");
}

namespace {

std::pair<int, int> frame_size(const MaskTube& a, const MaskTube& b) {
  if (a.masks.empty() || b.masks.empty()) throw ContractError("tube_iou: tube without masks");
  const auto& ma = a.masks.front();
  const auto& mb = b.masks.front();
  if (ma.height() != mb.height() || ma.width() != mb.width())
    throw ContractError("tube_iou: frame size mismatch");
  return {ma.height(), ma.width()};
}

}  // namespace

double tube_iou(const MaskTube& a, const MaskTube& b) {
  frame_size(a, b);
  std::size_t inter = 0, uni = 0;
  for (int t = std::min(a.t_start, b.t_start); t <= std::max(a.t_end, b.t_end); ++t) {
    const bool in_a = a.covers(t), in_b = b.covers(t);
    if (in_a && in_b) {
      const auto [i, u] = overlap_counts(a.masks[t - a.t_start], b.masks[t - b.t_start]);
      inter += i;
      uni += u;
    } else if (in_a) {
      uni += a.masks[t - a.t_start].area();
    } else if (in_b) {
      uni += b.masks[t - b.t_start].area();
    }
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double tube_iou_frame_average(const MaskTube& a, const MaskTube& b) {
  const auto [h, w] = frame_size(a, b);
  const int t0 = std::min(a.t_start, b.t_start);
  const int t1 = std::max(a.t_end, b.t_end);
  double total = 0.0;
  for (int t = t0; t <= t1; ++t) total += mask_iou(a.at(t, h, w), b.at(t, h, w));
  return total / (t1 - t0 + 1);
}

double tube_iou(const MaskTube& a, const MaskTube& b, IouMode mode) {
  return mode == IouMode::Tube ? tube_iou(a, b) : tube_iou_frame_average(a, b);
}

bool bounding_box(const Bitmap& bitmap, int& row0, int& col0, int& row1, int& col1) {
  row0 = bitmap.height;
  col0 = bitmap.width;
  row1 = -1;
  col1 = -1;
  for (int r = 0; r < bitmap.height; ++r)
    for (int c = 0; c < bitmap.width; ++c)
      if (bitmap.at(r, c)) {
        row0 = std::min(row0, r);
        row1 = std::max(row1, r);
        col0 = std::min(col0, c);
        col1 = std::max(col1, c);
      }
  return row1 >= 0;
}

Point2 centroid(const Bitmap& bitmap) {
  double sr = 0, sc = 0;
  std::size_t n = 0;
  for (int r = 0; r < bitmap.height; ++r)
    for (int c = 0; c < bitmap.width; ++c)
      if (bitmap.at(r, c)) {
        sr += r + 0.5;
        sc += c + 0.5;
        ++n;
      }
  if (n == 0) return {0.5, 0.5};
  return {sc / n / bitmap.width, sr / n / bitmap.height};
}

}  // namespace ivsg
