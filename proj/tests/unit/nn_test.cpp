#include <functional>
#include <random>

#include <gtest/gtest.h>

#include "ivsg/core/error.hpp"
#include "ivsg/nn/graph.hpp"
#include "ivsg/nn/layers.hpp"
#include "ivsg/nn/optim.hpp"

using namespace ivsg::nn;

namespace {

Mat random_mat(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Builds a scalar from the parameters in `store` via `fn`, then compares the
// tape gradient of every parameter entry with central differences.
void check_gradients(ParameterStore& store, const std::function<Var(Graph&)>& fn, double tol = 1e-6) {
  store.zero_grad();
  {
    Graph g;
    g.backward(fn(g));
  }
  for (const auto& p : store.all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value.data()[i];
      const double h = 1e-6;
      p->value.data()[i] = orig + h;
      double up, down;
      {
        Graph g(false);
        up = g.scalar(fn(g));
      }
      p->value.data()[i] = orig - h;
      {
        Graph g(false);
        down = g.scalar(fn(g));
      }
      p->value.data()[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.data()[i];
      const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
      EXPECT_LT(std::abs(numeric - analytic) / denom, tol) << p->name << "[" << i << "]";
    }
  }
}

}  // namespace

TEST(Graph, ElementwiseAndMatmulGradients) {
  std::mt19937_64 rng(1);
  ParameterStore store;
  auto& a = store.add("a", "g", random_mat(rng, 3, 4));
  auto& b = store.add("b", "g", random_mat(rng, 4, 2));
  auto& c = store.add("c", "g", random_mat(rng, 3, 2));
  auto& row = store.add("row", "g", random_mat(rng, 1, 2));
  check_gradients(store, [&](Graph& g) {
    Var ab = g.matmul(g.param(a), g.param(b));
    Var x = g.mul(g.add_rowwise(ab, g.param(row)), g.sigmoid(g.param(c)));
    Var y = g.sub(g.relu(x), g.scale(g.param(c), 0.3));
    Var z = g.matmul_nt(y, g.param(c));
    return g.add(g.mean(g.softmax_rows(z)), g.squared_norm(g.affine(y, 0.5, 0.1)));
  });
}

TEST(Graph, LogitGradientsAndDomain) {
  std::mt19937_64 rng(9);
  ParameterStore store;
  auto& a = store.add("a", "g", random_mat(rng, 2, 3));
  check_gradients(store, [&](Graph& g) { return g.squared_norm(g.logit(g.sigmoid(g.param(a)))); });
  Graph g;
  EXPECT_NEAR(g.value(g.logit(g.constant(Mat::Constant(1, 1, 0.75))))(0, 0), std::log(3.0), 1e-12);
  EXPECT_THROW(g.logit(g.constant(Mat::Constant(1, 1, 1.0))), ivsg::NumericalError);
}

TEST(Graph, LayerNormConcatSliceGradients) {
  std::mt19937_64 rng(2);
  ParameterStore store;
  auto& x = store.add("x", "g", random_mat(rng, 3, 6));
  auto& gamma = store.add("gamma", "g", random_mat(rng, 1, 6));
  auto& beta = store.add("beta", "g", random_mat(rng, 1, 6));
  auto& w = store.add("w", "g", random_mat(rng, 6, 1));
  check_gradients(store, [&](Graph& g) {
    Var n = g.layer_norm(g.param(x), g.param(gamma), g.param(beta));
    std::vector<Var> cols{g.slice_cols(n, 0, 2), g.slice_cols(n, 3, 3), g.slice_cols(n, 2, 1)};
    Var cc = g.concat_cols(cols);
    std::vector<Var> rows{g.slice_rows(cc, 1, 2), g.slice_rows(cc, 0, 1)};
    Var cr = g.concat_rows(rows);
    return g.sum(g.mul(g.matmul(cr, g.param(w)), g.matmul(cr, g.param(w))));
  });
}

TEST(Graph, ConvolutionGradients) {
  std::mt19937_64 rng(3);
  ParameterStore store;
  auto& x = store.add("x", "g", random_mat(rng, 5 * 6, 2));
  auto& w3 = store.add("w3", "g", random_mat(rng, 9 * 2, 3, 0.5));
  auto& b3 = store.add("b3", "g", random_mat(rng, 1, 3));
  auto& w1 = store.add("w1", "g", random_mat(rng, 3, 2, 0.5));
  auto& b1 = store.add("b1", "g", random_mat(rng, 1, 2));
  check_gradients(store, [&](Graph& g) {
    Var y = g.conv2d(g.param(x), 5, 6, g.param(w3), g.param(b3), 3, 2);  // -> 3x3
    Var z = g.conv2d(y, 3, 3, g.param(w1), g.param(b1), 1, 1);
    return g.squared_norm(z);
  });
}

TEST(Graph, ConvolutionMatchesDirectLoop) {
  std::mt19937_64 rng(4);
  const int h = 4, w = 5, cin = 2, cout = 3;
  Mat x = random_mat(rng, h * w, cin), wt = random_mat(rng, 9 * cin, cout), b = random_mat(rng, 1, cout);
  Graph g(false);
  Var y = g.conv2d(g.constant(x), h, w, g.constant(wt), g.constant(b), 3, 1);
  for (int oy = 0; oy < h; ++oy)
    for (int ox = 0; ox < w; ++ox)
      for (int co = 0; co < cout; ++co) {
        double acc = b(0, co);
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = oy + ky - 1, ix = ox + kx - 1;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            for (int ci = 0; ci < cin; ++ci) acc += x(iy * w + ix, ci) * wt((ky * 3 + kx) * cin + ci, co);
          }
        EXPECT_NEAR(g.value(y)(oy * w + ox, co), acc, 1e-12);
      }
}

TEST(Graph, LossGradients) {
  std::mt19937_64 rng(5);
  ParameterStore store;
  auto& logits = store.add("logits", "g", random_mat(rng, 4, 4, 2.0));
  auto& row = store.add("row", "g", random_mat(rng, 1, 5));
  Mat target(4, 4);
  for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = (i % 3 == 0) ? 1.0 : 0.0;
  auto op = bilinear_resize_op(2, 2, 4, 4);
  check_gradients(store, [&](Graph& g) {
    Var l = g.param(logits);
    Var bce = g.bce_with_logits(l, target);
    Var dice = g.soft_dice(l, target);
    Var ce = g.cross_entropy(g.param(row), 2);
    Var up = g.apply(op, g.slice_rows(g.concat_rows(std::vector<Var>{g.slice_cols(l, 0, 1)}), 0, 4));
    return g.add(g.add(bce, dice), g.add(ce, g.mean(up)));
  });
}

TEST(Graph, AttentionGradients) {
  std::mt19937_64 rng(6);
  ParameterStore store;
  Builder b(store, "", "g", rng);
  auto attn = Attention::create(b, "attn", 8, 2);
  auto& q = store.add("q", "g", random_mat(rng, 3, 8));
  auto& kv = store.add("kv", "g", random_mat(rng, 5, 8));
  check_gradients(store, [&](Graph& g) { return g.squared_norm(attn(g, g.param(q), g.param(kv), g.param(kv))); });
}

TEST(Graph, DiceOfIdenticalHardMasksIsZero) {
  Mat target(2, 3);
  target << 1, 0, 1, 0, 0, 1;
  Graph g(false);
  // Saturated logits reproduce the hard mask.
  Var d = g.soft_dice(g.constant((target.array() * 80.0 - 40.0).matrix()), target);
  EXPECT_NEAR(g.scalar(d), 0.0, 1e-12);
}

TEST(Graph, BilinearOperatorRowsSumToOne) {
  auto op = bilinear_resize_op(16, 16, 64, 64);
  Mat ones = Mat::Ones(256, 1);
  Mat r = (*op) * ones;
  EXPECT_NEAR(r.minCoeff(), 1.0, 1e-12);
  EXPECT_NEAR(r.maxCoeff(), 1.0, 1e-12);
}

TEST(Encoding, SinusoidalShapeAndRange) {
  Mat pe = grid_encoding(4, 4, 16);
  EXPECT_EQ(pe.rows(), 16);
  EXPECT_EQ(pe.cols(), 16);
  EXPECT_LE(pe.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Optim, AdamWMinimizesQuadratic) {
  ParameterStore store;
  auto& p = store.add("p", "g", Mat::Constant(1, 3, 5.0));
  AdamW opt(store, {{"g", Schedule{Schedule::Kind::Cosine, 0.1, 0.01}}}, Schedule{}, 500, AdamW::Options{});
  for (int i = 0; i < 500; ++i) {
    store.zero_grad();
    Graph g;
    g.backward(g.squared_norm(g.affine(g.param(p), 1.0, -1.0)));
    opt.step();
  }
  EXPECT_NEAR(p.value(0, 0), 1.0, 0.05);
}

TEST(Optim, CosineEndpoints) {
  Schedule s{Schedule::Kind::Cosine, 5e-5, 1e-5};
  EXPECT_DOUBLE_EQ(s.at(0, 100), 5e-5);
  EXPECT_NEAR(s.at(99, 100), 1e-5, 1e-18);
}
