#pragma once

#include <cstdint>
#include <vector>

namespace ivsg {

/// Dense row-major 0/1 grid.
struct Bitmap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Bitmap() = default;
  Bitmap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
  std::uint8_t& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return data.size(); }
  std::size_t count() const;

  bool operator==(const Bitmap&) const = default;
};

/// Normalized image coordinate: x = column / width, y = row / height,
/// origin at the top-left corner.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Run-length-encoded binary mask. Runs alternate background/foreground in
/// row-major order, starting with a (possibly zero-length) background run.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::vector<std::uint32_t> runs);

  /// All-background mask.
  static BinaryMask empty(int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  const std::vector<std::uint32_t>& runs() const noexcept { return runs_; }

  std::size_t area() const;
  bool is_empty() const { return area() == 0; }

  bool operator==(const BinaryMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint32_t> runs_;
};

/// Throws FormatError on non-binary values or an empty grid.
BinaryMask rle_encode(const Bitmap& bitmap);
/// Throws FormatError when the runs do not sum to height*width.
Bitmap rle_decode(const BinaryMask& mask);

/// |a ∩ b| / |a ∪ b|; two empty masks give 1.0. Throws ContractError on
/// dimension mismatch.
double mask_iou(const BinaryMask& a, const BinaryMask& b);
double bitmap_iou(const Bitmap& a, const Bitmap& b);

bool point_in_mask(Point2 p, const BinaryMask& mask);
bool point_in_bitmap(Point2 p, const Bitmap& bitmap);

/// Pixel (row, col) addressed by a normalized point, clamped to the grid.
std::pair<int, int> pixel_of(Point2 p, int height, int width);
/// Normalized coordinate of a pixel center.
Point2 pixel_center(int row, int col, int height, int width);

/// Masks of one entity over the inclusive frame window [t_start, t_end].
struct MaskTube {
  int t_start = 0;
  int t_end = 0;
  std::vector<BinaryMask> masks;

  int length() const { return t_end - t_start + 1; }
  bool covers(int t) const { return t >= t_start && t <= t_end; }
  /// Mask at absolute frame t; empty outside the window.
  BinaryMask at(int t, int height, int width) const;

  bool operator==(const MaskTube&) const = default;
};

/// Throws ContractError if the tube breaks its own invariants.
void validate_tube(const MaskTube& tube, int clip_length);

enum class IouMode { Tube, FrameAverage };

/// Volumetric IoU over the union of both windows; frames missing from a tube
/// count as empty masks.
double tube_iou(const MaskTube& a, const MaskTube& b);
/// Mean of per-frame mask IoU over the union of both windows.
double tube_iou_frame_average(const MaskTube& a, const MaskTube& b);
double tube_iou(const MaskTube& a, const MaskTube& b, IouMode mode);

/// Tight (row, col) bounding box of the foreground, inclusive. Returns false
/// when empty.
bool bounding_box(const Bitmap& bitmap, int& row0, int& col0, int& row1, int& col1);

/// Centroid of the foreground as a normalized point (pixel centers).
Point2 centroid(const Bitmap& bitmap);

}  // namespace ivsg
