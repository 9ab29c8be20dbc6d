#pragma once

#include <vector>

namespace ivsg {

/// One video frame, row-major height×width×channels.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  float at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  bool operator==(const Image&) const = default;
};

}  // namespace ivsg
