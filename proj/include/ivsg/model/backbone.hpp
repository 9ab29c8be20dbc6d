#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "ivsg/core/image.hpp"
#include "ivsg/core/mask.hpp"
#include "ivsg/core/types.hpp"
#include "ivsg/model/config.hpp"
#include "ivsg/nn/graph.hpp"
#include "ivsg/nn/layers.hpp"

namespace ivsg::model {

using nn::Graph;
using nn::Mat;
using nn::Var;

/// Encoded frame, value form. `values` is (height*width)×channels, row-major
/// over cells.
struct FeatureGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  int stride = 0;
  Mat values;
};

struct SegmentationResult {
  BinaryMask mask;   // logits > 0, full image resolution
  Mat mask_logits;   // image height × width
  Mat object_token;  // 1×dim
  double confidence = 0.0;
};

/// Graph form of one encoded frame. `detail` carries implementation-private
/// tensors (e.g. high-resolution skip features) that only the producing
/// backbone interprets.
struct EncodedFrame {
  Var features;  // cells×dim
  std::vector<Var> detail;
  int grid_height = 0;
  int grid_width = 0;
  int stride = 0;
  int image_height = 0;
  int image_width = 0;
};

struct SegmentationVars {
  Var logits;        // (image height*width)×1
  Var confidence;    // 1×1, in (0, 1)
  Var object_token;  // 1×dim
};

/// The promptable-segmentation contract. DIDM, SCH, training and the pipeline
/// depend on this interface only.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual int feature_dim() const = 0;
  virtual int stride() const = 0;
  virtual EncodedFrame encode(Graph& g, const Image& frame) const = 0;
  /// One prompt in, one mask out. Throws ContractError on a malformed prompt.
  virtual SegmentationVars segment(Graph& g, const EncodedFrame& frame, const VisualPrompt& prompt) const = 0;
  /// Re-binds an encoding computed in another graph as constants of `g`.
  virtual EncodedFrame import(Graph& g, const std::vector<Mat>& cached, const EncodedFrame& shape) const;
};

/// Per-cell foreground fraction of `mask` over stride×stride blocks,
/// (grid_h*grid_w)×1.
Mat cell_fractions(const BinaryMask& mask, int grid_height, int grid_width, int stride);
/// Per-cell prompt coverage in [0,1]: mask fraction, box overlap fraction, or
/// a Gaussian bump (σ = one cell) around a point.
Mat prompt_footprint(const VisualPrompt& prompt, int grid_height, int grid_width, int stride, int image_height,
                     int image_width);
/// Area-majority downsampling: a cell is foreground when more than half of
/// its in-image pixels are.
std::vector<std::uint8_t> downsample_majority(const BinaryMask& mask, int grid_height, int grid_width, int stride);

/// Small convolutional encoder + prompt encoder + two-way attention decoder.
class ToyBackbone final : public Backbone {
 public:
  ToyBackbone(const ModelConfig& config, const nn::Builder& builder);

  int feature_dim() const override { return cfg_.dim; }
  int stride() const override { return cfg_.stride(); }
  EncodedFrame encode(Graph& g, const Image& frame) const override;
  SegmentationVars segment(Graph& g, const EncodedFrame& frame, const VisualPrompt& prompt) const override;

 private:
  struct Conv {
    nn::Parameter* weight = nullptr;
    nn::Parameter* bias = nullptr;
    int kernel = 3;
    int stride = 1;
  };
  struct EncoderLayer {
    nn::Attention attn;
    nn::LayerNorm norm1, norm2;
    nn::Mlp mlp;
  };
  struct DecoderLayer {
    nn::Attention self_attn, token_to_image, image_to_token;
    nn::LayerNorm norm1, norm2, norm3, norm4;
    nn::Mlp mlp;
  };

  Var prompt_tokens(Graph& g, const VisualPrompt& prompt) const;
  Var dense_prompt(Graph& g, const EncodedFrame& frame, const VisualPrompt& prompt) const;

  ModelConfig cfg_;
  std::vector<Conv> convs_;
  std::vector<EncoderLayer> encoder_;
  Mat grid_pe_;  // cells×dim
  nn::Parameter* point_embed_ = nullptr;
  nn::Parameter* box_embed_ = nullptr;  // 2×dim, one row per corner
  nn::Parameter* mask_embed_ = nullptr;
  nn::Parameter* dense_point_ = nullptr;
  nn::Parameter* dense_box_ = nullptr;
  nn::Parameter* dense_mask_ = nullptr;
  nn::Parameter* dense_no_mask_ = nullptr;
  nn::Parameter* output_tokens_ = nullptr;  // 2×dim: mask token, confidence token
  std::vector<DecoderLayer> layers_;
  nn::Attention final_attn_;
  nn::LayerNorm final_norm_;
  nn::Linear upscale_;  // dim -> upscale channels at grid resolution
  nn::Linear hires_;    // hires channels -> upscale channels
  nn::Mlp hyper_;       // mask token -> upscale channels
  nn::Mlp confidence_head_;
  nn::Linear object_head_;
  std::shared_ptr<const nn::SparseOp> upsample_;
};

/// Inference state bound to one clip: cached encodings and per-entity
/// memory. Single-writer.
class BackboneSession {
 public:
  BackboneSession(const Backbone& backbone, const std::vector<Image>& frames);

  int frame_count() const { return static_cast<int>(frames_.size()); }
  const Backbone& backbone() const { return backbone_; }

  /// Cached; throws ContractError for an out-of-range index.
  const FeatureGrid& encode_frame(int frame);
  /// The cached encoding re-bound as constants of `g`.
  EncodedFrame encoded(Graph& g, int frame);
  /// Validates the prompt against the clip, then segments.
  SegmentationResult segment(int frame, const VisualPrompt& prompt);
  /// Segments and registers a tracked entity; returns its id.
  int track(int frame, const VisualPrompt& prompt, SegmentationResult* result = nullptr);
  /// Re-prompts with the entity's last predicted mask on `to_frame`.
  SegmentationResult propagate(int entity_id, int to_frame);
  std::size_t cache_size() const { return cache_.size(); }

 private:
  struct Cached {
    FeatureGrid grid;
    std::vector<Mat> tensors;  // features followed by detail
    EncodedFrame shape;
  };
  struct Memory {
    int frame = 0;
    BinaryMask mask;
    Mat token;
  };

  const Cached& cached(int frame);

  const Backbone& backbone_;
  const std::vector<Image>& frames_;
  std::map<int, Cached> cache_;
  std::vector<Memory> memory_;
};

/// Converts graph outputs to value form.
SegmentationResult to_result(const Graph& g, const SegmentationVars& v, int height, int width);

}  // namespace ivsg::model
