#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "caa/diffengine/gradcheck.hpp"
#include "caa/diffengine/ops.hpp"
#include "caa/error.hpp"
#include "caa/rng.hpp"
#include "toy_models.hpp"

using namespace caa;
using namespace caa::ad;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Wraps `op` into sum(op(x) * r) for a fixed random r and compares the
// reverse-mode gradient with central differences of the same graph.
void expect_gradient(const std::function<NodeId(Graph&, NodeId)>& op, const Tensor& x, double tol,
                     std::uint64_t seed = 1) {
  Rng rng(seed);
  Tensor weights;
  auto build = [&](Graph& g, NodeId p) {
    const NodeId y = op(g, p);
    g.forward(y);
    if (weights.empty()) weights = random_tensor(g.value(y).shape(), rng, -1.0, 1.0);
    return sum(g, mul(g, y, g.constant(weights)));
  };
  Graph g;
  const NodeId p = g.parameter(x);
  const NodeId root = build(g, p);
  g.forward(root);
  const Tensor analytic = g.backward(root).at(p);

  const std::vector<double> numeric = toys::numeric_gradient(
      [&](const Tensor& at) {
        Graph h;
        const NodeId q = h.parameter(at);
        return static_cast<double>(h.forward(build(h, q)).item());
      },
      x, 1e-3);
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    EXPECT_NEAR(analytic[i], numeric[i], tol * std::abs(numeric[i]) + 2e-3) << "entry " << i;
  }
}

}  // namespace

TEST(Graph, ConstantsAdd) {
  Graph g;
  const NodeId y = add(g, g.constant(Tensor::scalar(3.0f)), g.constant(Tensor::scalar(4.0f)));
  EXPECT_EQ(g.forward(y).item(), 7.0f);
}

TEST(Graph, UniformLogitsGiveLogClasses) {
  for (std::size_t d : {2u, 4u, 10u}) {
    Graph g;
    const NodeId logits = g.constant(Tensor({3, d}, 0.25f));
    const NodeId loss = softmax_cross_entropy(g, logits, {0, 1, 1});
    EXPECT_NEAR(g.forward(loss).item(), std::log(static_cast<double>(d)), 1e-6);
  }
}

TEST(Graph, SquareDerivative) {
  Graph g;
  const NodeId x = g.parameter(Tensor::scalar(3.0f));
  const NodeId y = mul(g, x, x);
  g.forward(y);
  EXPECT_FLOAT_EQ(g.backward(y).at(x).item(), 6.0f);
}

TEST(Graph, ClampInteriorPassesGradient) {
  Graph g;
  const NodeId x = g.parameter(Tensor::vector({0.3f, 0.6f}));
  const NodeId y = sum(g, mul_scalar(g, clamp(g, x, 0.0f, 1.0f), 2.5f));
  g.forward(y);
  const Tensor gx = g.backward(y).at(x);
  EXPECT_FLOAT_EQ(gx[0], 2.5f);
  EXPECT_FLOAT_EQ(gx[1], 2.5f);
}

TEST(Graph, ClampBoundaryIncludedOutsideZero) {
  Graph g;
  const NodeId x = g.parameter(Tensor::vector({0.0f, 1.0f, -0.5f, 1.5f}));
  const NodeId y = sum(g, clamp(g, x, 0.0f, 1.0f));
  g.forward(y);
  const Tensor gx = g.backward(y).at(x);
  EXPECT_EQ(gx[0], 1.0f);
  EXPECT_EQ(gx[1], 1.0f);
  EXPECT_EQ(gx[2], 0.0f);
  EXPECT_EQ(gx[3], 0.0f);
}

TEST(Graph, BackwardBeforeForwardIsStateError) {
  Graph g;
  const NodeId x = g.parameter(Tensor::scalar(1.0f));
  const NodeId y = mul(g, x, x);
  EXPECT_THROW(g.backward(y), StateError);
}

TEST(Graph, NonScalarRootRejected) {
  Graph g;
  const NodeId x = g.parameter(Tensor({2}, 1.0f));
  const NodeId y = mul_scalar(g, x, 2.0f);
  g.forward(y);
  EXPECT_THROW(g.backward(y), ShapeError);
}

TEST(Graph, ShapeMismatchNamesNode) {
  Graph g;
  const NodeId y = add(g, g.constant(Tensor({2})), g.constant(Tensor({3})));
  try {
    g.forward(y);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("node #"), std::string::npos);
  }
}

TEST(Graph, SetValueInvalidatesCache) {
  Graph g;
  const NodeId x = g.parameter(Tensor::scalar(2.0f));
  const NodeId y = mul(g, x, x);
  EXPECT_EQ(g.forward(y).item(), 4.0f);
  g.set_value(x, Tensor::scalar(5.0f));
  EXPECT_EQ(g.forward(y).item(), 25.0f);
  EXPECT_THROW(g.set_value(y, Tensor::scalar(1.0f)), InvalidArgument);
  EXPECT_THROW(g.set_value(x, Tensor({2})), ShapeError);
}

TEST(Graph, UnusedParameterGetsZeroGradient) {
  Graph g;
  const NodeId x = g.parameter(Tensor::scalar(2.0f));
  const NodeId unused = g.parameter(Tensor({3}, 1.0f));
  const NodeId y = mul(g, x, x);
  g.forward(y);
  const GradientMap gm = g.backward(y);
  EXPECT_EQ(gm.at(unused), Tensor({3}, 0.0f));
}

TEST(Gradcheck, QuadraticAndLinear) {
  Rng rng(3);
  {
    Graph g;
    const NodeId x = g.parameter(random_tensor({6}, rng, 0.5, 2.0));
    const NodeId y = sum(g, mul(g, x, x));
    EXPECT_LT(finite_difference_check(g, y, x, 1e-3).max_rel_error, 1e-4 * 10);
  }
  {
    Graph g;
    const NodeId x = g.parameter(random_tensor({6}, rng, 0.5, 2.0));
    const NodeId y = sum(g, mul_scalar(g, x, 0.75f));
    EXPECT_LT(finite_difference_check(g, y, x, 1e-3).max_rel_error, 1e-3);
  }
}

TEST(OpGradients, Elementwise) {
  Rng rng(5);
  const Tensor a = random_tensor({2, 3}, rng, 0.5, 1.5);
  const Tensor b = random_tensor({2, 3}, rng, 0.5, 1.5);
  expect_gradient([&](Graph& g, NodeId x) { return add(g, x, g.constant(b)); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return sub(g, g.constant(b), x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return mul(g, x, g.constant(b)); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return div(g, g.constant(b), x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return div(g, x, x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return exp(g, x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return log(g, x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return add_scalar(g, mul_scalar(g, x, -1.5f), 2.0f); }, a, 1e-2);
  const Tensor signed_a = random_tensor({2, 3}, rng, -1.0, 1.0);
  Tensor safe = signed_a;
  for (std::size_t i = 0; i < safe.size(); ++i) {
    if (std::abs(safe[i]) < 0.05f) safe[i] = 0.3f;
  }
  expect_gradient([&](Graph& g, NodeId x) { return relu(g, x); }, safe, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return clamp(g, x, -0.5f, 0.5f); }, safe, 1e-2);
}

TEST(OpGradients, Reductions) {
  Rng rng(6);
  const Tensor a = random_tensor({3, 4}, rng, -1.0, 1.0);
  expect_gradient([&](Graph& g, NodeId x) { return sum(g, x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return mean(g, x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return reduce_max(g, x); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return reduce_min(g, x); }, a, 1e-2);
}

TEST(OpGradients, MatmulAndConv) {
  Rng rng(7);
  const Tensor a = random_tensor({3, 4}, rng, -1.0, 1.0);
  const Tensor b = random_tensor({4, 2}, rng, -1.0, 1.0);
  expect_gradient([&](Graph& g, NodeId x) { return matmul(g, x, g.constant(b)); }, a, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return matmul(g, g.constant(a), x); }, b, 1e-2);

  const Tensor img = random_tensor({2, 2, 5, 5}, rng, -1.0, 1.0);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng, -1.0, 1.0);
  expect_gradient([&](Graph& g, NodeId x) { return conv2d(g, x, g.constant(w), 1); }, img, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return conv2d(g, g.constant(img), x, 1); }, w, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return conv2d(g, g.constant(img), x, 0); }, w, 1e-2);
  const Tensor bias = random_tensor({2}, rng, -1.0, 1.0);
  expect_gradient([&](Graph& g, NodeId x) { return add_bias(g, g.constant(img), x); }, bias, 1e-2);
}

TEST(OpGradients, PoolingAndReshape) {
  // Distinct values so the pooling argmax is stable under +-h.
  Tensor img({1, 2, 4, 4});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>((i * 37) % 32) * 0.05f;
  expect_gradient([&](Graph& g, NodeId x) { return max_pool2d(g, x, 2); }, img, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return reshape(g, x, {2, 16}); }, img, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return reshape_rows(g, x, 32); }, img, 1e-2);
}

TEST(OpGradients, PerSampleAndChannels) {
  Rng rng(8);
  const Tensor img = random_tensor({2, 3, 2, 2}, rng, 0.1, 0.9);
  const Tensor s = random_tensor({2}, rng, 0.5, 1.5);
  expect_gradient([&](Graph& g, NodeId x) { return add_per_sample(g, g.constant(img), x); }, s, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return mul_per_sample(g, g.constant(img), x); }, s, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return mul_per_sample(g, x, g.constant(s)); }, img, 1e-2);
  expect_gradient(
      [&](Graph& g, NodeId x) {
        return concat_channels(g, {channel(g, x, 2), channel(g, x, 0), mul(g, channel(g, x, 1), channel(g, x, 1))});
      },
      img, 1e-2);
}

TEST(OpGradients, SelectRowAndWeightedSum) {
  Rng rng(9);
  const Tensor m = random_tensor({3, 3}, rng, 0.1, 1.0);
  const Tensor t0 = random_tensor({2, 2}, rng, -1.0, 1.0);
  const Tensor t1 = random_tensor({2, 2}, rng, -1.0, 1.0);
  const Tensor t2 = random_tensor({2, 2}, rng, -1.0, 1.0);
  expect_gradient(
      [&](Graph& g, NodeId z) {
        return weighted_sum(g, select_row(g, z, 1), {g.constant(t0), g.constant(t1), g.constant(t2)});
      },
      m, 1e-2);
  expect_gradient(
      [&](Graph& g, NodeId x) {
        return weighted_sum(g, g.constant(Tensor::vector({0.2f, 0.5f, 0.3f})), {x, mul(g, x, x), g.constant(t2)});
      },
      t0, 1e-2);
}

TEST(OpGradients, GridSample) {
  Rng rng(10);
  const Tensor img = random_tensor({1, 2, 4, 4}, rng, 0.0, 1.0);
  // Off-lattice coordinates, some partly out of bounds.
  Tensor grid({1, 3, 3, 2});
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<float>(rng.uniform(-0.6, 3.6));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const float frac = grid[i] - std::floor(grid[i]);
    if (frac < 0.05f || frac > 0.95f) grid[i] += 0.3f;
  }
  expect_gradient([&](Graph& g, NodeId x) { return grid_sample(g, x, g.constant(grid)); }, img, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return grid_sample(g, g.constant(img), x); }, grid, 2e-2);
}

TEST(OpGradients, Losses) {
  Rng rng(11);
  const Tensor logits = random_tensor({4, 3}, rng, -2.0, 2.0);
  const Tensor other = random_tensor({4, 3}, rng, -2.0, 2.0);
  expect_gradient([&](Graph& g, NodeId x) { return softmax_cross_entropy(g, x, {0, 2, 1, 2}); }, logits, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return softmax_kl(g, x, g.constant(other)); }, logits, 1e-2);
  expect_gradient([&](Graph& g, NodeId x) { return softmax_kl(g, g.constant(other), x); }, logits, 1e-2);
}

TEST(Losses, CrossEntropyRowsMatchDirectFormula) {
  const Tensor logits({2, 3}, std::vector<float>{1.0f, 2.0f, 3.0f, -1.0f, 0.0f, 0.5f});
  const std::vector<int> labels = {2, 0};
  const std::vector<double> rows = cross_entropy_rows(logits, labels);
  for (std::size_t n = 0; n < 2; ++n) {
    double z = 0.0;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(static_cast<double>(logits[n * 3 + k]));
    EXPECT_NEAR(rows[n], std::log(z) - logits[n * 3 + labels[n]], 1e-6);
  }
  EXPECT_EQ(argmax_rows(logits), (std::vector<int>{2, 2}));
}

TEST(Losses, KlOfIdenticalIsZeroAndNonnegative) {
  Rng rng(12);
  const Tensor p = random_tensor({5, 4}, rng, -3.0, 3.0);
  const Tensor q = random_tensor({5, 4}, rng, -3.0, 3.0);
  for (double v : kl_rows(p, p)) EXPECT_NEAR(v, 0.0, 1e-6);
  for (double v : kl_rows(p, q)) EXPECT_GE(v, 0.0);
}

TEST(Tensor, SliceAndConcatRows) {
  Tensor t({3, 2}, std::vector<float>{0, 1, 2, 3, 4, 5});
  const Tensor mid = t.slice_rows(1, 2);
  EXPECT_EQ(mid.shape(), (Shape{2, 2}));
  EXPECT_EQ(mid[0], 2.0f);
  const std::vector<Tensor> parts = {t.slice_rows(0, 1), t.slice_rows(1, 2)};
  EXPECT_EQ(concat_rows(parts), t);
  EXPECT_THROW(t.slice_rows(2, 2), ShapeError);
}
