#include "ivsg/model/didm.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <optional>

#include "ivsg/core/error.hpp"

namespace ivsg::model {

PoolWeights pool_weights(const BinaryMask& mask, int grid_height, int grid_width, int stride) {
  const auto cells = downsample_majority(mask, grid_height, grid_width, stride);
  const auto n = static_cast<Eigen::Index>(cells.size());
  PoolWeights p;
  p.weights = Mat::Zero(1, n);
  const auto fg = std::accumulate(cells.begin(), cells.end(), 0);
  if (fg == 0) {
    p.fallback = true;
    p.weights.setConstant(1.0 / static_cast<double>(n));
    return p;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (cells[static_cast<std::size_t>(i)]) p.weights(0, i) = 1.0 / fg;
  return p;
}

Mat maskpool(const FeatureGrid& features, const BinaryMask& mask, bool* fallback) {
  const PoolWeights p = pool_weights(mask, features.height, features.width, features.stride);
  if (fallback) *fallback = p.fallback;
  return p.weights * features.values;
}

Didm::Didm(const ModelConfig& config, const nn::Builder& b) : cfg_(DiscoveryConfig::from(config)) {
  const int d = cfg_.token_dim;
  subject_embed_ = &b.normal("subject_embed", 1, d, 0.2);
  queries_ = &b.normal("queries", cfg_.num_queries, d, 1.0);
  const std::array<int, 3> ffn{d, 2 * d, d};
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    const nn::Builder lb = b.scoped("layer" + std::to_string(l));
    Layer layer;
    layer.self_attn = nn::Attention::create(lb, "self_attn", d, cfg_.heads);
    layer.cross_attn = nn::Attention::create(lb, "cross_attn", d, cfg_.heads);
    layer.norm1 = nn::LayerNorm::create(lb, "norm1", d);
    layer.norm2 = nn::LayerNorm::create(lb, "norm2", d);
    layer.norm3 = nn::LayerNorm::create(lb, "norm3", d);
    layer.ffn = nn::Mlp::create(lb, "ffn", ffn);
    layers_.push_back(std::move(layer));
  }
  const std::array<int, 3> head{d, cfg_.point_head_hidden, 2};
  point_head_ = nn::Mlp::create(b, "point_head", head);
  point_head_.layers.back().weight->value.setZero();  // start at the reference point
  locate_query_ = nn::Linear::create(b, "locate_query", d, d);
  locate_key_ = nn::Linear::create(b, "locate_key", d, d);
}

Var Didm::subject_token(Graph& g, Var features, const PoolWeights& pool) const {
  return g.add(g.param(*subject_embed_), g.matmul(g.constant(pool.weights), features));
}

Didm::Vars Didm::discover(Graph& g, Var features, int grid_height, int grid_width, Var subject_token,
                          const PoolWeights* subject) const {
  if (g.value(subject_token).rows() != 1 || g.value(subject_token).cols() != cfg_.token_dim)
    throw ContractError("subject token width does not match the discovery config");
  if (!g.value(features).allFinite()) throw NumericalError("non-finite features given to discovery");
  const std::array<Var, 2> parts{subject_token, g.param(*queries_)};
  Var tokens = g.concat_rows(parts);
  const Var keys = g.add(features, g.constant(nn::grid_encoding(grid_height, grid_width, cfg_.token_dim)));
  for (const auto& layer : layers_) {
    tokens = layer.norm1(g, g.add(tokens, layer.self_attn(g, tokens, tokens, tokens)));
    tokens = layer.norm2(g, g.add(tokens, layer.cross_attn(g, tokens, keys, features)));
    tokens = layer.norm3(g, g.add(tokens, layer.ffn(g, tokens)));
  }
  Vars out;
  out.queries = g.slice_rows(tokens, 1, cfg_.num_queries);
  Var scores = g.scale(g.matmul_nt(locate_query_(g, out.queries), locate_key_(g, keys)),
                       1.0 / std::sqrt(static_cast<double>(cfg_.token_dim)));
  if (subject && !subject->fallback && (subject->weights.array() == 0.0).any()) {
    const Mat bias = (subject->weights.array() > 0.0).cast<double>().matrix().replicate(cfg_.num_queries, 1) * -1e3;
    scores = g.add(scores, g.constant(bias));
  }
  Mat centers(static_cast<Eigen::Index>(grid_height) * grid_width, 2);
  for (int r = 0; r < grid_height; ++r)
    for (int c = 0; c < grid_width; ++c) {
      const Point2 p = pixel_center(r, c, grid_height, grid_width);
      centers.row(static_cast<Eigen::Index>(r) * grid_width + c) << p.x, p.y;
    }
  const Var reference = g.matmul(g.softmax_rows(scores), g.constant(std::move(centers)));
  out.points = g.sigmoid(g.add(point_head_(g, out.queries), g.logit(reference)));
  return out;
}

Mat Didm::build_subject_token(const FeatureGrid& features, const BinaryMask& subject_mask, bool* fallback) const {
  Graph g(false);
  const PoolWeights p = pool_weights(subject_mask, features.height, features.width, features.stride);
  if (fallback) *fallback = p.fallback;
  return g.value(subject_token(g, g.constant(features.values), p));
}

DiscoveryOutput Didm::discover(const FeatureGrid& features, const Mat& token, const BinaryMask* subject_mask) const {
  Graph g(false);
  std::optional<PoolWeights> pool;
  if (subject_mask) pool = pool_weights(*subject_mask, features.height, features.width, features.stride);
  const Vars v = discover(g, g.constant(features.values), features.height, features.width, g.constant(token),
                          pool ? &*pool : nullptr);
  DiscoveryOutput out;
  const Mat& pts = g.value(v.points);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) out.points.push_back({pts(i, 0), pts(i, 1)});
  out.query_features = g.value(v.queries);
  return out;
}

Heatmap heatmap_from_masks(const std::vector<BinaryMask>& masks, int grid_height, int grid_width, int stride) {
  Heatmap h{grid_height, grid_width, std::vector<double>(static_cast<std::size_t>(grid_height) * grid_width, 0.0)};
  for (const auto& m : masks) {
    const Mat f = cell_fractions(m, grid_height, grid_width, stride);
    for (Eigen::Index i = 0; i < f.rows(); ++i) h.probs[static_cast<std::size_t>(i)] += f(i, 0);
  }
  const double total = std::accumulate(h.probs.begin(), h.probs.end(), 0.0);
  if (!(total > 0.0)) throw ContractError("heatmap has no mass");
  for (auto& p : h.probs) p /= total;
  return h;
}

DiscoveryOutput heuristic_discover(const Heatmap& heatmap, int num_queries, int dim, std::mt19937_64& rng) {
  if (num_queries < 1) throw ContractError("num_queries must be >= 1");
  if (heatmap.probs.size() != static_cast<std::size_t>(heatmap.height) * heatmap.width)
    throw ContractError("heatmap size mismatch");
  double total = 0.0;
  for (double p : heatmap.probs) {
    if (p < 0.0 || !std::isfinite(p)) throw ContractError("heatmap must be finite and non-negative");
    total += p;
  }
  if (!(total > 0.0)) throw ContractError("heatmap has no mass");

  std::vector<double> remaining = heatmap.probs;
  DiscoveryOutput out;
  out.query_features = Mat::Zero(num_queries, dim);
  for (int q = 0; q < num_queries; ++q) {
    double mass = std::accumulate(remaining.begin(), remaining.end(), 0.0);
    if (!(mass > 0.0)) {
      remaining = heatmap.probs;
      mass = total;
    }
    const double u = std::uniform_real_distribution<double>(0.0, mass)(rng);
    double acc = 0.0;
    std::size_t cell = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      acc += remaining[i];
      if (u < acc && remaining[i] > 0.0) {
        cell = i;
        break;
      }
    }
    while (remaining[cell] <= 0.0 && cell > 0) --cell;  // guards the rounding tail
    remaining[cell] = 0.0;
    const int r = static_cast<int>(cell) / heatmap.width, c = static_cast<int>(cell) % heatmap.width;
    out.points.push_back(pixel_center(r, c, heatmap.height, heatmap.width));
  }
  return out;
}

}  // namespace ivsg::model
