#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ivsg::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseOp = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// A named trainable tensor. `group` selects the optimizer schedule.
struct Parameter {
  std::string name;
  std::string group;
  Mat value;
  Mat grad;
  bool frozen = false;

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

/// Owns every parameter of a model. Pointers handed out stay valid for the
/// lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(std::string name, std::string group, Mat init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Tape-based reverse-mode autodiff over row-major double matrices.
///
/// Every op appends a node holding its value and, when any input requires a
/// gradient, a closure that pushes the node's gradient to its inputs. Nodes are
/// created in topological order, so `backward` is a reverse sweep. A graph
/// built with `track_gradients = false` records values only.
class Graph {
 public:
  explicit Graph(bool track_gradients = true);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Mat value);
  Var scalar_constant(double v);
  /// Leaf bound to a parameter; one node per parameter per graph.
  Var param(Parameter& p);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
  /// Gradient after `backward`; zero matrix when none flowed.
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_rowwise(Var a, Var row);  // broadcast a 1×c row over every row of a
  Var scale(Var a, double s);
  Var affine(Var a, double s, double shift);
  Var relu(Var a);
  Var sigmoid(Var a);
  /// log(a / (1 - a)); every entry must lie strictly inside (0, 1).
  Var logit(Var a);
  Var softmax_rows(Var a);
  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, int start, int count);
  Var slice_cols(Var a, int start, int count);
  Var sum(Var a);
  Var mean(Var a);
  Var mean_rows(Var a);  // 1×c column means
  /// Fixed linear operator applied from the left: op * a.
  Var apply(const std::shared_ptr<const SparseOp>& op, Var a);
  /// k×k convolution, zero padding k/2. `x` is (height*width)×cin, `weight`
  /// is (k*k*cin)×cout, `bias` is 1×cout.
  Var conv2d(Var x, int height, int width, Var weight, Var bias, int kernel, int stride);

  /// Mean binary cross-entropy of sigmoid(logits) against `target`.
  Var bce_with_logits(Var logits, const Mat& target);
  /// 1 - (2·Σpt + 1) / (Σp + Σt + 1) with p = sigmoid(logits).
  Var soft_dice(Var logits, const Mat& target);
  /// -log softmax(logits)[target] for a 1×n row.
  Var cross_entropy(Var logits, int target);
  Var squared_norm(Var a);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape; parameter gradients are
  /// accumulated into Parameter::grad.
  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Mat value, bool needs_grad);
  bool any_grad(std::initializer_list<Var> vs) const;
  void accumulate(int id, const Mat& g);
  Mat& grad_ref(int id) { return nodes_[id].grad; }

  bool track_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

/// Row-major bilinear resampling operator (align-corners=false) mapping an
/// in_h×in_w grid to out_h×out_w.
std::shared_ptr<const SparseOp> bilinear_resize_op(int in_h, int in_w, int out_h, int out_w);

}  // namespace ivsg::nn
