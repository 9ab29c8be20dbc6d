#pragma once

#include <random>
#include <vector>

#include "ivsg/model/backbone.hpp"

namespace ivsg::model {

struct DiscoveryConfig {
  int num_queries = 3;
  int decoder_layers = 2;
  int token_dim = 32;
  int heads = 2;
  int point_head_hidden = 32;

  static DiscoveryConfig from(const ModelConfig& c) {
    return {c.num_queries, c.discovery_layers, c.dim, c.heads, c.point_head_hidden};
  }
};

struct DiscoveryOutput {
  std::vector<Point2> points;  // exactly num_queries, inside [0,1]²
  Mat query_features;          // num_queries×dim
};

/// Row weights (1×cells) for mask pooling. Cells are foreground by area
/// majority; with no foreground cell every cell gets equal weight and
/// `fallback` is set.
struct PoolWeights {
  Mat weights;
  bool fallback = false;
};

PoolWeights pool_weights(const BinaryMask& mask, int grid_height, int grid_width, int stride);
/// Mean feature over the mask's foreground cells, 1×channels.
Mat maskpool(const FeatureGrid& features, const BinaryMask& mask, bool* fallback = nullptr);

class Didm {
 public:
  Didm(const ModelConfig& config, const nn::Builder& builder);

  const DiscoveryConfig& config() const { return cfg_; }

  /// learned subject embedding + maskpool(features, mask).
  Var subject_token(Graph& g, Var features, const PoolWeights& pool) const;

  /// Each query attends once more over the cells; the attention-weighted
  /// cell center is a reference point and the point head predicts a
  /// logit-space offset from it before the final sigmoid. Cells pooled into
  /// `subject` (unless it fell back) are left out of that attention.
  struct Vars {
    Var points;   // num_queries×2, (x, y)
    Var queries;  // num_queries×dim
  };
  Vars discover(Graph& g, Var features, int grid_height, int grid_width, Var subject_token,
                const PoolWeights* subject = nullptr) const;

  Mat build_subject_token(const FeatureGrid& features, const BinaryMask& subject_mask, bool* fallback = nullptr) const;
  DiscoveryOutput discover(const FeatureGrid& features, const Mat& subject_token,
                           const BinaryMask* subject_mask = nullptr) const;

 private:
  struct Layer {
    nn::Attention self_attn, cross_attn;
    nn::LayerNorm norm1, norm2, norm3;
    nn::Mlp ffn;
  };
  DiscoveryConfig cfg_;
  nn::Parameter* subject_embed_ = nullptr;
  nn::Parameter* queries_ = nullptr;
  std::vector<Layer> layers_;
  nn::Linear locate_query_, locate_key_;
  nn::Mlp point_head_;
};

/// Dataset-level object-location prior at feature-grid resolution.
struct Heatmap {
  int height = 0;
  int width = 0;
  std::vector<double> probs;  // row-major, sums to 1
};

/// Accumulates per-cell foreground fractions of every mask and normalizes.
/// Throws ContractError when no mask has any foreground.
Heatmap heatmap_from_masks(const std::vector<BinaryMask>& masks, int grid_height, int grid_width, int stride);

/// Cells drawn without replacement (falling back to the full law once the
/// support is exhausted); each point is the drawn cell's center.
DiscoveryOutput heuristic_discover(const Heatmap& heatmap, int num_queries, int dim, std::mt19937_64& rng);

}  // namespace ivsg::model
