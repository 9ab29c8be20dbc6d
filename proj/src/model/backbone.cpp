#include "ivsg/model/backbone.hpp"

#include <array>
#include <cmath>

#include "ivsg/core/error.hpp"

namespace ivsg::model {

using nn::Builder;

EncodedFrame Backbone::import(Graph& g, const std::vector<Mat>& cached, const EncodedFrame& shape) const {
  if (cached.empty()) throw ContractError("import: no cached tensors");
  EncodedFrame f = shape;
  f.features = g.constant(cached[0]);
  f.detail.clear();
  for (std::size_t i = 1; i < cached.size(); ++i) f.detail.push_back(g.constant(cached[i]));
  return f;
}

Mat cell_fractions(const BinaryMask& mask, int grid_height, int grid_width, int stride) {
  const Bitmap b = rle_decode(mask);
  Mat out = Mat::Zero(static_cast<Eigen::Index>(grid_height) * grid_width, 1);
  for (int r = 0; r < grid_height; ++r)
    for (int c = 0; c < grid_width; ++c) {
      int fg = 0, total = 0;
      for (int y = r * stride; y < std::min(b.height, (r + 1) * stride); ++y)
        for (int x = c * stride; x < std::min(b.width, (c + 1) * stride); ++x) {
          ++total;
          fg += b.at(y, x) != 0;
        }
      if (total) out(static_cast<Eigen::Index>(r) * grid_width + c, 0) = static_cast<double>(fg) / total;
    }
  return out;
}

std::vector<std::uint8_t> downsample_majority(const BinaryMask& mask, int grid_height, int grid_width, int stride) {
  const Mat f = cell_fractions(mask, grid_height, grid_width, stride);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(f.rows()));
  for (Eigen::Index i = 0; i < f.rows(); ++i) out[static_cast<std::size_t>(i)] = f(i, 0) > 0.5 ? 1 : 0;
  return out;
}

ToyBackbone::ToyBackbone(const ModelConfig& config, const Builder& b) : cfg_(config) {
  cfg_.validate();
  const int d = cfg_.dim;
  auto conv = [&](const std::string& name, int cin, int cout, int stride) {
    Conv c;
    c.weight = &b.weight(name + ".weight", 9 * cin, cout);
    c.bias = &b.zeros(name + ".bias", 1, cout);
    c.stride = stride;
    return c;
  };
  convs_ = {conv("conv1", cfg_.image_channels, cfg_.hires_channels, 1),
            conv("conv2", cfg_.hires_channels, cfg_.mid_channels, 2),
            conv("conv3", cfg_.mid_channels, cfg_.mid_channels, 2),
            conv("conv4", cfg_.mid_channels, d, 1)};
  grid_pe_ = nn::grid_encoding(cfg_.grid_height(), cfg_.grid_width(), d);
  const std::array<int, 3> enc_widths{d, cfg_.mlp_hidden, d};
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const Builder lb = b.scoped("encoder.layer" + std::to_string(l));
    EncoderLayer layer;
    layer.attn = nn::Attention::create(lb, "attn", d, cfg_.heads);
    layer.norm1 = nn::LayerNorm::create(lb, "norm1", d);
    layer.norm2 = nn::LayerNorm::create(lb, "norm2", d);
    layer.mlp = nn::Mlp::create(lb, "mlp", enc_widths);
    encoder_.push_back(std::move(layer));
  }

  point_embed_ = &b.normal("prompt.point", 1, d, 0.2);
  box_embed_ = &b.normal("prompt.box", 2, d, 0.2);
  mask_embed_ = &b.normal("prompt.mask", 1, d, 0.2);
  dense_point_ = &b.normal("prompt.dense_point", 1, d, 0.2);
  dense_box_ = &b.normal("prompt.dense_box", 1, d, 0.2);
  dense_mask_ = &b.normal("prompt.dense_mask", 1, d, 0.2);
  dense_no_mask_ = &b.normal("prompt.dense_no_mask", 1, d, 0.2);
  output_tokens_ = &b.normal("decoder.output_tokens", 2, d, 0.2);

  const std::array<int, 3> mlp_widths{d, cfg_.mlp_hidden, d};
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const Builder lb = b.scoped("decoder.layer" + std::to_string(l));
    DecoderLayer layer;
    layer.self_attn = nn::Attention::create(lb, "self_attn", d, cfg_.heads);
    layer.token_to_image = nn::Attention::create(lb, "token_to_image", d, cfg_.heads);
    layer.image_to_token = nn::Attention::create(lb, "image_to_token", d, cfg_.heads);
    layer.norm1 = nn::LayerNorm::create(lb, "norm1", d);
    layer.norm2 = nn::LayerNorm::create(lb, "norm2", d);
    layer.norm3 = nn::LayerNorm::create(lb, "norm3", d);
    layer.norm4 = nn::LayerNorm::create(lb, "norm4", d);
    layer.mlp = nn::Mlp::create(lb, "mlp", mlp_widths);
    layers_.push_back(std::move(layer));
  }
  final_attn_ = nn::Attention::create(b, "decoder.final_attn", d, cfg_.heads);
  final_norm_ = nn::LayerNorm::create(b, "decoder.final_norm", d);
  upscale_ = nn::Linear::create(b, "head.upscale", d, cfg_.upscale_channels);
  hires_ = nn::Linear::create(b, "head.hires", cfg_.hires_channels, cfg_.upscale_channels);
  const std::array<int, 3> hyper_widths{d, d, cfg_.upscale_channels};
  hyper_ = nn::Mlp::create(b, "head.hyper", hyper_widths);
  const std::array<int, 3> conf_widths{d, d, 1};
  confidence_head_ = nn::Mlp::create(b, "head.confidence", conf_widths);
  object_head_ = nn::Linear::create(b, "head.object_token", d, d);
  upsample_ = nn::bilinear_resize_op(cfg_.grid_height(), cfg_.grid_width(), cfg_.image_height, cfg_.image_width);
}

EncodedFrame ToyBackbone::encode(Graph& g, const Image& frame) const {
  if (frame.height != cfg_.image_height || frame.width != cfg_.image_width || frame.channels != cfg_.image_channels)
    throw ContractError("frame shape does not match the backbone configuration");
  Mat x(static_cast<Eigen::Index>(frame.height) * frame.width, frame.channels);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = frame.data[static_cast<std::size_t>(i)];
    if (!std::isfinite(v)) throw NumericalError("non-finite pixel in frame");
    x.data()[i] = v - 0.5;
  }
  int h = frame.height, w = frame.width;
  Var cur = g.constant(std::move(x));
  Var hires;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const auto& c = convs_[i];
    cur = g.conv2d(cur, h, w, g.param(*c.weight), g.param(*c.bias), c.kernel, c.stride);
    h = (h - 1) / c.stride + 1;
    w = (w - 1) / c.stride + 1;
    if (i + 1 < convs_.size()) cur = g.relu(cur);
    if (i == 0) hires = cur;
  }
  cur = g.add(cur, g.constant(grid_pe_));
  for (const auto& layer : encoder_) {
    cur = layer.norm1(g, g.add(cur, layer.attn(g, cur, cur, cur)));
    cur = layer.norm2(g, g.add(cur, layer.mlp(g, cur)));
  }
  EncodedFrame f;
  f.features = cur;
  f.detail = {hires};
  f.grid_height = h;
  f.grid_width = w;
  f.stride = cfg_.stride();
  f.image_height = frame.height;
  f.image_width = frame.width;
  return f;
}

Var ToyBackbone::prompt_tokens(Graph& g, const VisualPrompt& prompt) const {
  switch (prompt.kind) {
    case PromptKind::Point: {
      const Point2 p = *prompt.point;
      return g.add(g.constant(nn::sinusoidal_encoding(std::span<const Point2>(&p, 1), cfg_.dim)), g.param(*point_embed_));
    }
    case PromptKind::Box: {
      const Box& bx = *prompt.box;
      const std::array<Point2, 2> corners{Point2{bx.x_min, bx.y_min}, Point2{bx.x_max, bx.y_max}};
      return g.add(g.constant(nn::sinusoidal_encoding(corners, cfg_.dim)), g.param(*box_embed_));
    }
    case PromptKind::Mask: {
      const Point2 c = centroid(rle_decode(*prompt.mask));
      return g.add(g.constant(nn::sinusoidal_encoding(std::span<const Point2>(&c, 1), cfg_.dim)), g.param(*mask_embed_));
    }
  }
  throw ContractError("unknown prompt kind");
}

Mat prompt_footprint(const VisualPrompt& prompt, int grid_height, int grid_width, int stride, int image_height,
                     int image_width) {
  if (prompt.kind == PromptKind::Mask) return cell_fractions(*prompt.mask, grid_height, grid_width, stride);
  Mat a(static_cast<Eigen::Index>(grid_height) * grid_width, 1);
  for (int r = 0; r < grid_height; ++r)
    for (int c = 0; c < grid_width; ++c) {
      // Cell extent in pixels, clipped to the image.
      const double y0 = r * stride, y1 = std::min<double>(image_height, (r + 1) * stride);
      const double x0 = c * stride, x1 = std::min<double>(image_width, (c + 1) * stride);
      double v = 0.0;
      if (prompt.kind == PromptKind::Point) {
        const double px = prompt.point->x * image_width, py = prompt.point->y * image_height;
        const double dx = (x0 + x1) / 2 - px, dy = (y0 + y1) / 2 - py;
        v = std::exp(-(dx * dx + dy * dy) / (2.0 * stride * stride));
      } else {
        const Box& bx = *prompt.box;
        const double ox = std::max(0.0, std::min(x1, bx.x_max * image_width) - std::max(x0, bx.x_min * image_width));
        const double oy = std::max(0.0, std::min(y1, bx.y_max * image_height) - std::max(y0, bx.y_min * image_height));
        v = ox * oy / ((x1 - x0) * (y1 - y0));
      }
      a(static_cast<Eigen::Index>(r) * grid_width + c, 0) = v;
    }
  return a;
}

Var ToyBackbone::dense_prompt(Graph& g, const EncodedFrame& frame, const VisualPrompt& prompt) const {
  const Eigen::Index cells = static_cast<Eigen::Index>(frame.grid_height) * frame.grid_width;
  const Mat a = prompt_footprint(prompt, frame.grid_height, frame.grid_width, frame.stride, frame.image_height,
                                 frame.image_width);
  const Mat rest = (Mat::Ones(cells, 1) - a).eval();
  nn::Parameter* inside = prompt.kind == PromptKind::Point ? dense_point_
                                : prompt.kind == PromptKind::Box ? dense_box_
                                                                 : dense_mask_;
  return g.add(g.matmul(g.constant(a), g.param(*inside)), g.matmul(g.constant(rest), g.param(*dense_no_mask_)));
}

SegmentationVars ToyBackbone::segment(Graph& g, const EncodedFrame& frame, const VisualPrompt& prompt) const {
  prompt.validate();
  if (prompt.kind == PromptKind::Mask &&
      (prompt.mask->height() != frame.image_height || prompt.mask->width() != frame.image_width))
    throw ContractError("mask prompt size does not match the frame");
  if (frame.detail.empty()) throw ContractError("encoding was not produced by this backbone");

  const std::array<Var, 2> token_parts{g.param(*output_tokens_), prompt_tokens(g, prompt)};
  Var tokens = g.concat_rows(token_parts);
  Var src = g.add(frame.features, dense_prompt(g, frame, prompt));
  const Var pos = g.constant(grid_pe_);
  for (const auto& layer : layers_) {
    tokens = layer.norm1(g, g.add(tokens, layer.self_attn(g, tokens, tokens, tokens)));
    tokens = layer.norm2(g, g.add(tokens, layer.token_to_image(g, tokens, g.add(src, pos), src)));
    tokens = layer.norm3(g, g.add(tokens, layer.mlp(g, tokens)));
    src = layer.norm4(g, g.add(src, layer.image_to_token(g, g.add(src, pos), tokens, tokens)));
  }
  tokens = final_norm_(g, g.add(tokens, final_attn_(g, tokens, g.add(src, pos), src)));
  const Var mask_token = g.slice_rows(tokens, 0, 1);
  const Var conf_token = g.slice_rows(tokens, 1, 1);

  const Var up = g.apply(upsample_, upscale_(g, src));
  const Var pixels = g.relu(g.add(up, hires_(g, frame.detail[0])));
  SegmentationVars out;
  out.logits = g.matmul_nt(pixels, hyper_(g, mask_token));
  out.confidence = g.sigmoid(confidence_head_(g, conf_token));
  out.object_token = object_head_(g, mask_token);
  return out;
}

SegmentationResult to_result(const Graph& g, const SegmentationVars& v, int height, int width) {
  SegmentationResult r;
  const Mat& logits = g.value(v.logits);
  if (!logits.allFinite()) throw NumericalError("non-finite mask logits");
  r.mask_logits = Eigen::Map<const Mat>(logits.data(), height, width);
  Bitmap b(height, width);
  for (Eigen::Index i = 0; i < logits.size(); ++i) b.data[static_cast<std::size_t>(i)] = logits.data()[i] > 0.0;
  r.mask = rle_encode(b);
  r.object_token = g.value(v.object_token);
  r.confidence = g.scalar(v.confidence);
  return r;
}

BackboneSession::BackboneSession(const Backbone& backbone, const std::vector<Image>& frames)
    : backbone_(backbone), frames_(frames) {}

const BackboneSession::Cached& BackboneSession::cached(int frame) {
  if (frame < 0 || frame >= frame_count()) throw ContractError("frame index " + std::to_string(frame) + " out of range");
  auto it = cache_.find(frame);
  if (it != cache_.end()) return it->second;
  Graph g(false);
  const EncodedFrame enc = backbone_.encode(g, frames_[static_cast<std::size_t>(frame)]);
  Cached c;
  c.shape = enc;
  c.tensors.push_back(g.value(enc.features));
  for (Var d : enc.detail) c.tensors.push_back(g.value(d));
  if (!c.tensors[0].allFinite()) throw NumericalError("non-finite features");
  c.grid = FeatureGrid{enc.grid_height, enc.grid_width, static_cast<int>(c.tensors[0].cols()), enc.stride, c.tensors[0]};
  return cache_.emplace(frame, std::move(c)).first->second;
}

const FeatureGrid& BackboneSession::encode_frame(int frame) { return cached(frame).grid; }

EncodedFrame BackboneSession::encoded(Graph& g, int frame) {
  const Cached& c = cached(frame);
  return backbone_.import(g, c.tensors, c.shape);
}

SegmentationResult BackboneSession::segment(int frame, const VisualPrompt& prompt) {
  if (prompt.frame != frame) throw ContractError("prompt frame does not match the requested frame");
  Graph g(false);
  const EncodedFrame enc = encoded(g, frame);
  return to_result(g, backbone_.segment(g, enc, prompt), enc.image_height, enc.image_width);
}

int BackboneSession::track(int frame, const VisualPrompt& prompt, SegmentationResult* result) {
  SegmentationResult r = segment(frame, prompt);
  memory_.push_back(Memory{frame, r.mask, r.object_token});
  if (result) *result = std::move(r);
  return static_cast<int>(memory_.size()) - 1;
}

SegmentationResult BackboneSession::propagate(int entity_id, int to_frame) {
  if (entity_id < 0 || entity_id >= static_cast<int>(memory_.size()))
    throw ContractError("unknown entity id " + std::to_string(entity_id));
  Memory& m = memory_[static_cast<std::size_t>(entity_id)];
  SegmentationResult r = segment(to_frame, VisualPrompt::with_mask(to_frame, m.mask));
  m = Memory{to_frame, r.mask, r.object_token};
  return r;
}

}  // namespace ivsg::model
