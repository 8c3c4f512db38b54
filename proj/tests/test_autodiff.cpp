#include <gtest/gtest.h>

#include <cmath>

#include "inflect/autodiff.hpp"
#include "inflect/gradcheck.hpp"
#include "inflect/rng.hpp"

using namespace inflect;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

}  // namespace

TEST(Backward, SquareAtThreeHasGradientSix) {
  Graph g;
  Var x = g.input(Tensor::scalar(3.0));
  Var y = x * x;
  g.backward(y);
  EXPECT_EQ(g.grad(x)[0], 6.0);
}

TEST(Backward, SaturatedSigmoidSuppressesUpstreamGradient) {
  // y = sigmoid(w * x) with pre-activation 10; dy/dx = sigmoid'(10) * w.
  Graph g;
  Var x = g.input(Tensor::scalar(10.0));
  Var h = sigmoid(x);
  Var y = scale(h, 2.0);
  g.tap(h);
  g.backward(y);
  const double s = 1.0 / (1.0 + std::exp(-10.0));
  const double downstream = g.grad(h)[0];
  const double upstream = g.grad(x)[0];
  EXPECT_DOUBLE_EQ(downstream, 2.0);
  EXPECT_NEAR(upstream, s * (1.0 - s) * downstream, 1e-18);
  EXPECT_LE(std::abs(upstream), 4.6e-5 * std::abs(downstream));
}

TEST(Backward, TappedNodesGetGradientsWhenEverythingIsFrozen) {
  Rng rng(1);
  Param w{"w", random_tensor({3, 4}, rng), false};
  Param b{"b", random_tensor({3}, rng), false};
  Graph g;
  Var x = g.constant(random_tensor({2, 4}, rng));
  Var h = linear(x, g.param(w), g.param(b));
  g.tap(h);
  Var out = sum_squares(tanh(h));
  g.backward(out);
  Tensor gh = g.grad(h);
  EXPECT_EQ(gh.size(), 6);
  EXPECT_GT(gh.values().norm(), 0.0);
  EXPECT_FALSE(w.value.has_grad());
  EXPECT_FALSE(b.value.has_grad());
}

TEST(Backward, TappedNodeOffTheLossPathGetsZeroGradient) {
  Graph g;
  Var a = g.input(Tensor::scalar(2.0), false);
  Var b = g.input(Tensor::scalar(5.0), false);
  Var side = scale(a, 3.0);
  g.tap(side);
  Var loss = b * b;
  g.backward(loss);
  EXPECT_EQ(g.grad(side)[0], 0.0);
}

TEST(Backward, DetachedHeadGivesZeroTapGradient) {
  Graph g;
  Var h = g.input(Tensor::scalar(4.0), false);
  g.tap(h);
  Var loss = sum_squares(detach(h));
  g.backward(loss);
  EXPECT_EQ(g.grad(h)[0], 0.0);
}

TEST(Backward, TrainableParamsAccumulateAndFrozenOnesStayEmpty) {
  Param w{"w", Tensor::scalar(3.0), true};
  Param f{"f", Tensor::scalar(2.0), false};
  for (int rep = 0; rep < 2; ++rep) {
    Graph g;
    Var loss = g.param(w) * g.param(w) + g.param(f);
    g.backward(loss);
  }
  EXPECT_EQ(w.value.grad()[0], 12.0);
  EXPECT_FALSE(f.value.has_grad());
}

TEST(Backward, EmptyGraphIsStateError) {
  Graph g;
  EXPECT_THROW(g.backward(Var()), StateError);
}

TEST(Backward, SecondBackwardIsStateError) {
  Graph g;
  Var x = g.input(Tensor::scalar(1.0));
  Var y = x * x;
  g.backward(y);
  EXPECT_THROW(g.backward(y), StateError);
}

TEST(Backward, NonScalarLossIsInvalidInput) {
  Graph g;
  Var x = g.input(Tensor({2}, Vector<double>::Ones(2)));
  EXPECT_THROW(g.backward(x), InvalidInput);
}

TEST(Backward, GradOfUntappedIntermediateIsStateError) {
  Graph g;
  Var x = g.input(Tensor::scalar(1.0));
  Var h = x * x;
  Var y = h * h;
  g.backward(y);
  EXPECT_THROW(g.grad(h), StateError);
}

TEST(Backward, GradBeforeBackwardIsStateError) {
  Graph g;
  Var x = g.input(Tensor::scalar(1.0));
  EXPECT_THROW(g.grad(x), StateError);
}

TEST(TensorBasics, NonFiniteValuesAreNumericErrors) {
  Graph g;
  Tensor bad({2}, Vector<double>::Zero(2));
  bad[1] = std::nan("");
  EXPECT_THROW(g.input(bad), NumericError);
  Var x = g.input(Tensor::scalar(1e308));
  EXPECT_THROW(scale(x, 10.0), NumericError);
}

TEST(TensorBasics, ShapeMustMatchValueCount) {
  EXPECT_THROW(Tensor({2, 3}, Vector<double>::Zero(5)), InvalidInput);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6);
  EXPECT_EQ(t.rows(), 2);
  EXPECT_THROW(t.reshape({4}), InvalidInput);
}

TEST(TensorBasics, ChecksumTracksEveryBit) {
  Tensor a({3}, Vector<double>::Constant(3, 1.0));
  Tensor b = a;
  EXPECT_EQ(checksum(a), checksum(b));
  b[2] = std::nextafter(1.0, 2.0);
  EXPECT_NE(checksum(a), checksum(b));
}

TEST(Dropout, ZeroRateIsIdentityAndKeepsGraphDeterministic) {
  Rng rng(3);
  Graph g;
  Var x = g.input(random_tensor({4, 5}, rng));
  Var y = dropout(x, 0.0, rng);
  EXPECT_EQ(y.id(), x.id());
  EXPECT_FALSE(g.stochastic());
}

TEST(Dropout, InvertedScalingPreservesKeptValues) {
  Rng rng(4);
  Graph g;
  Tensor ones({1000}, Vector<double>::Ones(1000));
  Var y = dropout(g.input(ones), 0.25, rng);
  EXPECT_TRUE(g.stochastic());
  int kept = 0;
  for (Index i = 0; i < 1000; ++i) {
    const double v = y.value()[i];
    ASSERT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
    kept += v != 0.0;
  }
  EXPECT_NEAR(kept / 1000.0, 0.75, 0.05);
}

TEST(FiniteDiff, IdentityGraphHasZeroError) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Param p{"p", random_tensor({1}, rng, 10.0), true};
    Param* params[] = {&p};
    auto r = finite_diff_check([&](Graph& g) { return g.param(p); }, params);
    EXPECT_EQ(r.max_relative_error, 0.0);
    EXPECT_EQ(r.entries_checked, 1);
  }
}

TEST(FiniteDiff, LinearLayerBelowOneEMinusEight) {
  Rng rng(6);
  Param w{"w", random_tensor({3, 4}, rng), true};
  Param b{"b", random_tensor({3}, rng), true};
  Tensor x = random_tensor({5, 4}, rng);
  Param* params[] = {&w, &b};
  auto r = finite_diff_check([&](Graph& g) { return sum(linear(g.constant(x), g.param(w), g.param(b))); }, params);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(FiniteDiff, RandomThreeOpGraphsBelowOneEMinusSix) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Index n = 2 + static_cast<Index>(rng.below(4)), d = 2 + static_cast<Index>(rng.below(4));
    Param w{"w", random_tensor({d, d}, rng, 0.5), true};
    Tensor x = random_tensor({n, d}, rng);
    Param* params[] = {&w};
    auto r = finite_diff_check(
        [&](Graph& g) { return sum_squares(tanh(linear(g.constant(x), g.param(w)))); }, params);
    EXPECT_LT(r.max_relative_error, 1e-6) << "seed " << seed;
  }
}

TEST(FiniteDiff, StochasticGraphIsRejected) {
  Rng rng(7);
  Param p{"p", random_tensor({8}, rng), true};
  Param* params[] = {&p};
  Rng drop(1);
  EXPECT_THROW(finite_diff_check([&](Graph& g) { return sum(dropout(g.param(p), 0.5, drop)); }, params),
               StateError);
}

TEST(FiniteDiff, RestoresParameterValuesFlagsAndGradients) {
  Rng rng(8);
  Param p{"p", random_tensor({4}, rng), false};
  const Tensor before = p.value;
  Param* params[] = {&p};
  finite_diff_check([&](Graph& g) { return sum_squares(g.param(p)); }, params);
  EXPECT_TRUE(p.value == before);
  EXPECT_FALSE(p.trainable);
  EXPECT_FALSE(p.value.has_grad());
}

TEST(Determinism, SameSeedGivesBitwiseIdenticalLossTrajectory) {
  auto trajectory = [] {
    Rng rng(9);
    Param w{"w", random_tensor({4, 4}, rng), true};
    Tensor x = random_tensor({8, 4}, rng);
    std::vector<double> losses;
    for (int step = 0; step < 5; ++step) {
      Graph g;
      Var loss = sum_squares(gelu(linear(g.constant(x), g.param(w))));
      g.backward(loss);
      losses.push_back(loss.value()[0]);
      w.value.values() -= 0.01 * w.value.grad();
      w.value.zero_grad();
    }
    return losses;
  };
  EXPECT_EQ(trajectory(), trajectory());
}
