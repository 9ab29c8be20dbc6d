#pragma once

#include <random>
#include <vector>

#include "ivsg/core/mask.hpp"

namespace ivsg::train {

/// Exact Euclidean distance from each pixel center to the nearest background
/// pixel center, pixels outside the image counting as background. Row-major,
/// zero on background.
std::vector<double> distance_transform(const Bitmap& mask);

/// Draws a foreground pixel with probability d(p) / Σd and returns its
/// normalized center. Throws ContractError on an empty mask.
Point2 sample_gt_point(const BinaryMask& mask, std::mt19937_64& rng);

/// Uniform draw over foreground pixels (evaluation prompts).
Point2 sample_uniform_point(const BinaryMask& mask, std::mt19937_64& rng);

}  // namespace ivsg::train
