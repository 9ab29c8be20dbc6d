#include "ivsg/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include "ivsg/core/error.hpp"

namespace ivsg::nn {

Parameter& Builder::weight(const std::string& name, int fan_in, int fan_out) const {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Mat m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return store_.add(prefix_ + name, group_, std::move(m));
}

Parameter& Builder::zeros(const std::string& name, int rows, int cols) const {
  return store_.add(prefix_ + name, group_, Mat::Zero(rows, cols));
}

Parameter& Builder::constant(const std::string& name, int rows, int cols, double v) const {
  return store_.add(prefix_ + name, group_, Mat::Constant(rows, cols, v));
}

Parameter& Builder::normal(const std::string& name, int rows, int cols, double stddev) const {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng_);
  return store_.add(prefix_ + name, group_, std::move(m));
}

Linear Linear::create(const Builder& b, const std::string& name, int in, int out) {
  Linear l;
  auto s = b.scoped(name);
  l.weight = &s.weight("weight", in, out);
  l.bias = &s.zeros("bias", 1, out);
  return l;
}

Var Linear::operator()(Graph& g, Var x) const {
  return g.add_rowwise(g.matmul(x, g.param(*weight)), g.param(*bias));
}

LayerNorm LayerNorm::create(const Builder& b, const std::string& name, int dim) {
  LayerNorm n;
  auto s = b.scoped(name);
  n.gamma = &s.constant("gamma", 1, dim, 1.0);
  n.beta = &s.zeros("beta", 1, dim);
  return n;
}

Var LayerNorm::operator()(Graph& g, Var x) const { return g.layer_norm(x, g.param(*gamma), g.param(*beta)); }

Mlp Mlp::create(const Builder& b, const std::string& name, std::span<const int> widths) {
  if (widths.size() < 2) throw ContractError("Mlp needs at least input and output widths");
  Mlp m;
  auto s = b.scoped(name);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back(Linear::create(s, "fc" + std::to_string(i), widths[i], widths[i + 1]));
  return m;
}

Var Mlp::operator()(Graph& g, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](g, x);
    if (i + 1 < layers.size()) x = g.relu(x);
  }
  return x;
}

Attention Attention::create(const Builder& b, const std::string& name, int dim, int heads) {
  if (heads < 1 || dim % heads != 0) throw ContractError("attention dim must be divisible by heads");
  Attention a;
  auto s = b.scoped(name);
  a.q = Linear::create(s, "q", dim, dim);
  a.k = Linear::create(s, "k", dim, dim);
  a.v = Linear::create(s, "v", dim, dim);
  a.out = Linear::create(s, "out", dim, dim);
  a.heads = heads;
  return a;
}

Var Attention::operator()(Graph& g, Var queries, Var keys, Var values) const {
  Var qp = q(g, queries);
  Var kp = k(g, keys);
  Var vp = v(g, values);
  const int dim = static_cast<int>(g.value(qp).cols());
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? qp : g.slice_cols(qp, h * dh, dh);
    Var kh = heads == 1 ? kp : g.slice_cols(kp, h * dh, dh);
    Var vh = heads == 1 ? vp : g.slice_cols(vp, h * dh, dh);
    Var attn = g.softmax_rows(g.scale(g.matmul_nt(qh, kh), scale));
    outs.push_back(g.matmul(attn, vh));
  }
  Var joined = heads == 1 ? outs[0] : g.concat_cols(outs);
  return out(g, joined);
}

Mat sinusoidal_encoding(std::span<const Point2> points, int dim) {
  if (dim % 4 != 0) throw ContractError("positional encoding width must be divisible by 4");
  const int freqs = dim / 4;
  Mat out(static_cast<Eigen::Index>(points.size()), dim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int f = 0; f < freqs; ++f) {
      // Geometric ladder from half a cycle to eight cycles per image side.
      const double freq = freqs == 1 ? 1.0 : 0.5 * std::pow(16.0, static_cast<double>(f) / (freqs - 1));
      const double ax = 2.0 * std::numbers::pi * freq * points[i].x;
      const double ay = 2.0 * std::numbers::pi * freq * points[i].y;
      const auto r = static_cast<Eigen::Index>(i);
      out(r, 2 * f) = std::sin(ax);
      out(r, 2 * f + 1) = std::cos(ax);
      out(r, 2 * freqs + 2 * f) = std::sin(ay);
      out(r, 2 * freqs + 2 * f + 1) = std::cos(ay);
    }
  }
  return out;
}

Mat grid_encoding(int height, int width, int dim) {
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(height) * width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) pts.push_back(pixel_center(r, c, height, width));
  return sinusoidal_encoding(pts, dim);
}

}  // namespace ivsg::nn
