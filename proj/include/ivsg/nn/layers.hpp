#pragma once

#include <random>
#include <span>
#include <string>

#include "ivsg/core/mask.hpp"
#include "ivsg/nn/graph.hpp"

namespace ivsg::nn {

/// Creates parameters under a common name prefix and optimizer group.
class Builder {
 public:
  Builder(ParameterStore& store, std::string prefix, std::string group, std::mt19937_64& rng)
      : store_(store), prefix_(std::move(prefix)), group_(std::move(group)), rng_(rng) {}

  Builder scoped(const std::string& name) const { return Builder(store_, prefix_ + name + ".", group_, rng_); }

  /// Xavier-uniform matrix.
  Parameter& weight(const std::string& name, int fan_in, int fan_out) const;
  Parameter& zeros(const std::string& name, int rows, int cols) const;
  Parameter& constant(const std::string& name, int rows, int cols, double v) const;
  Parameter& normal(const std::string& name, int rows, int cols, double stddev) const;

 private:
  ParameterStore& store_;
  std::string prefix_;
  std::string group_;
  std::mt19937_64& rng_;
};

struct Linear {
  Parameter* weight = nullptr;  // in×out
  Parameter* bias = nullptr;    // 1×out

  static Linear create(const Builder& b, const std::string& name, int in, int out);
  Var operator()(Graph& g, Var x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm create(const Builder& b, const std::string& name, int dim);
  Var operator()(Graph& g, Var x) const;
};

/// Linear → ReLU → ... → Linear.
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(const Builder& b, const std::string& name, std::span<const int> widths);
  Var operator()(Graph& g, Var x) const;
};

/// Multi-head scaled dot-product attention with separate q/k/v/out projections.
struct Attention {
  Linear q, k, v, out;
  int heads = 1;

  static Attention create(const Builder& b, const std::string& name, int dim, int heads);
  Var operator()(Graph& g, Var queries, Var keys, Var values) const;
};

/// Fixed 2-D sinusoidal encoding of normalized points, `dim` divisible by 4:
/// [sin(2πf·x), cos(2πf·x)] for dim/4 frequencies, then the same for y.
Mat sinusoidal_encoding(std::span<const Point2> points, int dim);
/// Encoding of every cell center of an h×w grid, row-major.
Mat grid_encoding(int height, int width, int dim);

}  // namespace ivsg::nn
