#include "ivsg/nn/graph.hpp"

#include <algorithm>
#include <cmath>

#include "ivsg/core/error.hpp"

namespace ivsg::nn {

Parameter& ParameterStore::add(std::string name, std::string group, Mat init) {
  if (find(name)) throw ContractError("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->group = std::move(group);
  p->grad = Mat::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

Graph::Graph(bool track_gradients) : track_(track_gradients) { nodes_.reserve(1024); }

Var Graph::push(Mat value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = track_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

bool Graph::any_grad(std::initializer_list<Var> vs) const {
  if (!track_) return false;
  for (auto v : vs)
    if (nodes_[v.id].needs_grad) return true;
  return false;
}

void Graph::accumulate(int id, const Mat& g) {
  auto& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

Var Graph::constant(Mat value) { return push(std::move(value), false); }

Var Graph::scalar_constant(double v) { return constant(Mat::Constant(1, 1, v)); }

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  Var v = push(p.value, !p.frozen);
  nodes_[v.id].param = &p;
  param_nodes_[&p] = v.id;
  return v;
}

Mat Graph::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {
void require(bool ok, const char* what) {
  if (!ok) throw ContractError(what);
}
}  // namespace

Var Graph::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul: inner dimensions differ");
  Mat out = value(a) * value(b);
  Var r = push(std::move(out), any_grad({a, b}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      if (nodes_[a.id].needs_grad) accumulate(a.id, g * value(b).transpose());
      if (nodes_[b.id].needs_grad) accumulate(b.id, value(a).transpose() * g);
    };
  return r;
}

Var Graph::matmul_nt(Var a, Var b) {
  require(value(a).cols() == value(b).cols(), "matmul_nt: inner dimensions differ");
  Mat out = value(a) * value(b).transpose();
  Var r = push(std::move(out), any_grad({a, b}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      if (nodes_[a.id].needs_grad) accumulate(a.id, g * value(b));
      if (nodes_[b.id].needs_grad) accumulate(b.id, g.transpose() * value(a));
    };
  return r;
}

Var Graph::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add: shape mismatch");
  Var r = push(value(a) + value(b), any_grad({a, b}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      accumulate(a.id, g);
      accumulate(b.id, g);
    };
  return r;
}

Var Graph::sub(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "sub: shape mismatch");
  Var r = push(value(a) - value(b), any_grad({a, b}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      accumulate(a.id, g);
      if (nodes_[b.id].needs_grad) accumulate(b.id, -g);
    };
  return r;
}

Var Graph::mul(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "mul: shape mismatch");
  Mat out = value(a).cwiseProduct(value(b));
  Var r = push(std::move(out), any_grad({a, b}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, b, r] {
      const Mat& g = nodes_[r.id].grad;
      if (nodes_[a.id].needs_grad) accumulate(a.id, g.cwiseProduct(value(b)));
      if (nodes_[b.id].needs_grad) accumulate(b.id, g.cwiseProduct(value(a)));
    };
  return r;
}

Var Graph::add_rowwise(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_rowwise: shape mismatch");
  Mat out = value(a).rowwise() + value(row).row(0);
  Var r = push(std::move(out), any_grad({a, row}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, row, r] {
      const Mat& g = nodes_[r.id].grad;
      accumulate(a.id, g);
      if (nodes_[row.id].needs_grad) accumulate(row.id, g.colwise().sum());
    };
  return r;
}

Var Graph::scale(Var a, double s) { return affine(a, s, 0.0); }

Var Graph::affine(Var a, double s, double shift) {
  Mat out = (value(a) * s).array() + shift;
  Var r = push(std::move(out), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r, s] { accumulate(a.id, nodes_[r.id].grad * s); };
  return r;
}

Var Graph::relu(Var a) {
  Mat out = value(a).cwiseMax(0.0);
  Var r = push(std::move(out), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r] {
      Mat g = nodes_[r.id].grad;
      const Mat& x = value(a);
      for (Eigen::Index i = 0; i < g.size(); ++i)
        if (x.data()[i] <= 0.0) g.data()[i] = 0.0;
      accumulate(a.id, g);
    };
  return r;
}

Var Graph::sigmoid(Var a) {
  Mat out = value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Var r = push(std::move(out), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r] {
      const Mat& y = value(r);
      accumulate(a.id, nodes_[r.id].grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
    };
  return r;
}

Var Graph::logit(Var a) {
  const Mat& x = value(a);
  if (!(x.array() > 0.0).all() || !(x.array() < 1.0).all()) throw NumericalError("logit outside (0, 1)");
  Mat out = x.unaryExpr([](double v) { return std::log(v / (1.0 - v)); });
  Var r = push(std::move(out), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r] {
      const Mat& y = value(a);
      accumulate(a.id, nodes_[r.id].grad.cwiseQuotient(y.cwiseProduct((1.0 - y.array()).matrix())));
    };
  return r;
}

Var Graph::softmax_rows(Var a) {
  Mat out = value(a);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  Var r = push(std::move(out), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r] {
      const Mat& y = value(r);
      const Mat& g = nodes_[r.id].grad;
      Mat dx(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double dot = g.row(i).dot(y.row(i));
        dx.row(i) = y.row(i).array() * (g.row(i).array() - dot);
      }
      accumulate(a.id, dx);
    };
  return r;
}

Var Graph::layer_norm(Var a, Var gamma, Var beta, double eps) {
  const Mat& x = value(a);
  const auto c = x.cols();
  require(value(gamma).cols() == c && value(beta).cols() == c, "layer_norm: parameter width mismatch");
  Mat xhat(x.rows(), c);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  Mat out = (xhat.array().rowwise() * value(gamma).row(0).array()).rowwise() + value(beta).row(0).array();
  Var r = push(std::move(out), any_grad({a, gamma, beta}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, gamma, beta, r, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const Mat& g = nodes_[r.id].grad;
      if (nodes_[gamma.id].needs_grad) accumulate(gamma.id, g.cwiseProduct(xhat).colwise().sum());
      if (nodes_[beta.id].needs_grad) accumulate(beta.id, g.colwise().sum());
      if (nodes_[a.id].needs_grad) {
        Mat dxhat = g.array().rowwise() * value(gamma).row(0).array();
        Mat dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          const double m1 = dxhat.row(i).mean();
          const double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(g.cols());
          dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
        }
        accumulate(a.id, dx);
      }
    };
  return r;
}

Var Graph::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const auto rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (auto p : parts) {
    require(value(p).rows() == rows, "concat_cols: row mismatch");
    cols += value(p).cols();
    grad = grad || (track_ && nodes_[p.id].needs_grad);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (auto p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  Var r = push(std::move(out), grad);
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, ids = std::vector<Var>(parts.begin(), parts.end()), r] {
      const Mat& g = nodes_[r.id].grad;
      Eigen::Index at = 0;
      for (auto p : ids) {
        const auto w = value(p).cols();
        if (nodes_[p.id].needs_grad) accumulate(p.id, g.middleCols(at, w));
        at += w;
      }
    };
  return r;
}

Var Graph::concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  const auto cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (auto p : parts) {
    require(value(p).cols() == cols, "concat_rows: column mismatch");
    rows += value(p).rows();
    grad = grad || (track_ && nodes_[p.id].needs_grad);
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (auto p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  Var r = push(std::move(out), grad);
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, ids = std::vector<Var>(parts.begin(), parts.end()), r] {
      const Mat& g = nodes_[r.id].grad;
      Eigen::Index at = 0;
      for (auto p : ids) {
        const auto h = value(p).rows();
        if (nodes_[p.id].needs_grad) accumulate(p.id, g.middleRows(at, h));
        at += h;
      }
    };
  return r;
}

Var Graph::slice_rows(Var a, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= value(a).rows(), "slice_rows: out of range");
  Var r = push(value(a).middleRows(start, count), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r, start, count] {
      Mat g = Mat::Zero(value(a).rows(), value(a).cols());
      g.middleRows(start, count) = nodes_[r.id].grad;
      accumulate(a.id, g);
    };
  return r;
}

Var Graph::slice_cols(Var a, int start, int count) {
  require(start >= 0 && count >= 0 && start + count <= value(a).cols(), "slice_cols: out of range");
  Var r = push(value(a).middleCols(start, count), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r, start, count] {
      Mat g = Mat::Zero(value(a).rows(), value(a).cols());
      g.middleCols(start, count) = nodes_[r.id].grad;
      accumulate(a.id, g);
    };
  return r;
}

Var Graph::sum(Var a) {
  Var r = push(Mat::Constant(1, 1, value(a).sum()), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r] {
      accumulate(a.id, Mat::Constant(value(a).rows(), value(a).cols(), nodes_[r.id].grad(0, 0)));
    };
  return r;
}

Var Graph::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  Var r = push(Mat::Constant(1, 1, value(a).sum() / n), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r, n] {
      accumulate(a.id, Mat::Constant(value(a).rows(), value(a).cols(), nodes_[r.id].grad(0, 0) / n));
    };
  return r;
}

Var Graph::mean_rows(Var a) {
  const double n = static_cast<double>(value(a).rows());
  Var r = push(value(a).colwise().sum() / n, any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r, n] {
      Mat g = nodes_[r.id].grad.replicate(value(a).rows(), 1) / n;
      accumulate(a.id, g);
    };
  return r;
}

Var Graph::apply(const std::shared_ptr<const SparseOp>& op, Var a) {
  require(op->cols() == value(a).rows(), "apply: operator width mismatch");
  Mat out = (*op) * value(a);
  Var r = push(std::move(out), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, op, a, r] {
      Mat g = op->transpose() * nodes_[r.id].grad;
      accumulate(a.id, g);
    };
  return r;
}

Var Graph::conv2d(Var x, int height, int width, Var weight, Var bias, int kernel, int stride) {
  const Mat& xv = value(x);
  const int cin = static_cast<int>(xv.cols());
  require(xv.rows() == static_cast<Eigen::Index>(height) * width, "conv2d: input rows != height*width");
  require(kernel % 2 == 1, "conv2d: kernel must be odd");
  require(value(weight).rows() == kernel * kernel * cin, "conv2d: weight rows != k*k*cin");
  require(value(bias).rows() == 1 && value(bias).cols() == value(weight).cols(), "conv2d: bias shape");
  const int pad = kernel / 2;
  const int out_h = (height + 2 * pad - kernel) / stride + 1;
  const int out_w = (width + 2 * pad - kernel) / stride + 1;

  auto cols = std::make_shared<Mat>(Mat::Zero(static_cast<Eigen::Index>(out_h) * out_w, kernel * kernel * cin));
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int ky = 0; ky < kernel; ++ky) {
        const int iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= height) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const int ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= width) continue;
          cols->row(row).segment((ky * kernel + kx) * cin, cin) = xv.row(static_cast<Eigen::Index>(iy) * width + ix);
        }
      }
    }
  Mat out = (*cols) * value(weight);
  out.rowwise() += value(bias).row(0);
  Var r = push(std::move(out), any_grad({x, weight, bias}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [=, this] {
      const Mat& g = nodes_[r.id].grad;
      if (nodes_[weight.id].needs_grad) accumulate(weight.id, cols->transpose() * g);
      if (nodes_[bias.id].needs_grad) accumulate(bias.id, g.colwise().sum());
      if (nodes_[x.id].needs_grad) {
        const Mat dcols = g * value(weight).transpose();
        Mat dx = Mat::Zero(static_cast<Eigen::Index>(height) * width, cin);
        for (int oy = 0; oy < out_h; ++oy)
          for (int ox = 0; ox < out_w; ++ox) {
            const Eigen::Index row = static_cast<Eigen::Index>(oy) * out_w + ox;
            for (int ky = 0; ky < kernel; ++ky) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= height) continue;
              for (int kx = 0; kx < kernel; ++kx) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= width) continue;
                dx.row(static_cast<Eigen::Index>(iy) * width + ix) += dcols.row(row).segment((ky * kernel + kx) * cin, cin);
              }
            }
          }
        accumulate(x.id, dx);
      }
    };
  return r;
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Var Graph::bce_with_logits(Var logits, const Mat& target) {
  const Mat& x = value(logits);
  require(x.rows() == target.rows() && x.cols() == target.cols(), "bce: shape mismatch");
  const double n = static_cast<double>(x.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    loss += std::max(v, 0.0) - v * target.data()[i] + std::log1p(std::exp(-std::abs(v)));
  }
  Var r = push(Mat::Constant(1, 1, loss / n), any_grad({logits}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, logits, r, target, n] {
      const Mat& x = value(logits);
      Mat g(x.rows(), x.cols());
      const double s = nodes_[r.id].grad(0, 0) / n;
      for (Eigen::Index i = 0; i < x.size(); ++i) g.data()[i] = (stable_sigmoid(x.data()[i]) - target.data()[i]) * s;
      accumulate(logits.id, g);
    };
  return r;
}

Var Graph::soft_dice(Var logits, const Mat& target) {
  const Mat& x = value(logits);
  require(x.rows() == target.rows() && x.cols() == target.cols(), "dice: shape mismatch");
  Mat p = x.unaryExpr([](double v) { return stable_sigmoid(v); });
  const double inter = p.cwiseProduct(target).sum();
  const double denom = p.sum() + target.sum() + 1.0;
  const double loss = 1.0 - (2.0 * inter + 1.0) / denom;
  Var r = push(Mat::Constant(1, 1, loss), any_grad({logits}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, logits, r, target, p = std::move(p), inter, denom] {
      const double s = nodes_[r.id].grad(0, 0);
      Mat g(p.rows(), p.cols());
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double dp = -(2.0 * target.data()[i] * denom - (2.0 * inter + 1.0)) / (denom * denom);
        g.data()[i] = s * dp * p.data()[i] * (1.0 - p.data()[i]);
      }
      accumulate(logits.id, g);
    };
  return r;
}

Var Graph::cross_entropy(Var logits, int target) {
  const Mat& x = value(logits);
  require(x.rows() == 1 && target >= 0 && target < x.cols(), "cross_entropy: bad target");
  const double m = x.maxCoeff();
  const double lse = m + std::log((x.array() - m).exp().sum());
  Var r = push(Mat::Constant(1, 1, lse - x(0, target)), any_grad({logits}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, logits, r, target, lse] {
      Mat g = (value(logits).array() - lse).exp().matrix();
      g(0, target) -= 1.0;
      accumulate(logits.id, g * nodes_[r.id].grad(0, 0));
    };
  return r;
}

Var Graph::squared_norm(Var a) {
  Var r = push(Mat::Constant(1, 1, value(a).squaredNorm()), any_grad({a}));
  if (nodes_[r.id].needs_grad)
    nodes_[r.id].back = [this, a, r] { accumulate(a.id, value(a) * (2.0 * nodes_[r.id].grad(0, 0))); };
  return r;
}

void Graph::backward(Var loss) {
  require(value(loss).size() == 1, "backward: loss must be a scalar");
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad = Mat::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    auto& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back();
    if (n.param) n.param->grad += n.grad;
  }
}

std::shared_ptr<const SparseOp> bilinear_resize_op(int in_h, int in_w, int out_h, int out_w) {
  std::vector<Eigen::Triplet<double>> entries;
  auto axis = [](int out_i, int in_n, int out_n, int& i0, int& i1, double& w1) {
    double src = (out_i + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    i0 = static_cast<int>(std::floor(src));
    i1 = std::min(i0 + 1, in_n - 1);
    w1 = src - i0;
  };
  for (int oy = 0; oy < out_h; ++oy) {
    int y0, y1;
    double wy;
    axis(oy, in_h, out_h, y0, y1, wy);
    for (int ox = 0; ox < out_w; ++ox) {
      int x0, x1;
      double wx;
      axis(ox, in_w, out_w, x0, x1, wx);
      const int row = oy * out_w + ox;
      entries.emplace_back(row, y0 * in_w + x0, (1 - wy) * (1 - wx));
      entries.emplace_back(row, y0 * in_w + x1, (1 - wy) * wx);
      entries.emplace_back(row, y1 * in_w + x0, wy * (1 - wx));
      entries.emplace_back(row, y1 * in_w + x1, wy * wx);
    }
  }
  auto op = std::make_shared<SparseOp>(out_h * out_w, in_h * in_w);
  op->setFromTriplets(entries.begin(), entries.end());  // duplicates are summed
  return op;
}

}  // namespace ivsg::nn
