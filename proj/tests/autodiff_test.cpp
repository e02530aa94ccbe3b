/*
 * Copyright 2026 The dgrl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "dgrl/autodiff/gradient.hpp"
#include "dgrl/models/mlp.hpp"
#include "test_support.hpp"

namespace dgrl::ad {
namespace {

using testing::central_difference;
using testing::DiagonalQuadratic;
using testing::HalfSquaredNorm;

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::matrix(1, n, std::move(v));
}

TEST(GradientTest, HalfSquaredNormIsIdentity) {
  std::vector<Tensor> theta{row({3.0, -4.0})};
  GradientVector g = gradient(HalfSquaredNorm{}, std::span<const Tensor>(theta));
  EXPECT_EQ(g[0].data(), (std::vector<double>{3.0, -4.0}));
}

TEST(GradientTest, ConstantHasZeroGradient) {
  auto seven = [](auto& tape, auto) { return tape.constant(Tensor::scalar(7.0)); };
  std::vector<Tensor> theta{row({1.5, -2.0, 0.25})};
  GradientVector g = gradient(seven, std::span<const Tensor>(theta));
  for (double v : g[0].data()) EXPECT_EQ(v, 0.0);
}

TEST(GradientTest, MlpCrossEntropyMatchesCentralDifferences) {
  std::mt19937_64 rng(42);
  MLPSpec spec{3, {5}, 3, Activation::tanh};
  MLPParams p = testing::random_mlp(spec, 7);
  Tensor X = testing::random_matrix(6, 3, rng);
  std::vector<int> y = testing::random_labels(6, 3, rng);
  MeanCrossEntropy expr{&spec, &X, y};
  GradientVector g = gradient(expr, p.view());

  auto f = [&](const std::vector<Tensor>& t) { return evaluate(expr, std::span<const Tensor>(t)); };
  std::uniform_int_distribution<std::size_t> seg(0, p.tensors.size() - 1);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t s = seg(rng);
    std::uniform_int_distribution<std::size_t> idx(0, p.tensors[s].size() - 1);
    const std::size_t i = idx(rng);
    const double fd = central_difference(f, p.tensors, s, i, 1e-5);
    EXPECT_LT(testing::relative_error(g[s][i], fd), 1e-5) << "segment " << s << " index " << i;
  }
}

TEST(GradientTest, EveryOpMatchesFiniteDifferencesAtRandomPoints) {
  // Exercises matmul (both orientations), add, add_row, relu, tanh,
  // log_softmax, nll, mean, sum and both scale variants.
  std::mt19937_64 rng(3);
  std::vector<int> y{0, 2, 1, 1};
  Tensor w = testing::random_matrix(4, 3, rng);
  auto expr = [&](auto& tape, auto p) {
    auto x = tape.constant(Tensor::matrix(4, 2, {0.3, -1.2, 0.8, 0.1, -0.5, 0.9, 1.4, -0.7}));
    auto h = ad::relu(ad::add_row(ad::matmul(x, p[0], true), p[1]));       // 4x3
    auto t = ad::tanh(ad::add(ad::matmul(h, p[2]), ad::scale(h, 0.5)));     // 4x3
    auto s = ad::scale(t, w);
    auto ce = ad::mean(ad::nll(ad::log_softmax(s), std::span<const int>(y)));
    return ad::add(ce, ad::scale(ad::sum(p[2]), 0.01));
  };
  for (int point = 0; point < 10; ++point) {
    std::vector<Tensor> params{testing::random_matrix(3, 2, rng), Tensor::vector({0.2, -0.1, 0.4}),
                               testing::random_matrix(3, 3, rng)};
    GradientVector g = gradient(expr, std::span<const Tensor>(params));
    auto f = [&](const std::vector<Tensor>& t) { return evaluate(expr, std::span<const Tensor>(t)); };
    for (std::size_t s = 0; s < params.size(); ++s)
      for (std::size_t i = 0; i < params[s].size(); ++i) {
        const double fd = central_difference(f, params, s, i, 1e-5);
        EXPECT_LT(testing::relative_error(g[s][i], fd), 1e-5) << "point " << point;
      }
  }
}

TEST(GradientTest, PureAndBitwiseRepeatable) {
  std::mt19937_64 rng(5);
  MLPSpec spec{2, {4, 3}, 2, Activation::relu};
  MLPParams p = testing::random_mlp(spec, 11);
  Tensor X = testing::random_matrix(8, 2, rng);
  std::vector<int> y = testing::random_labels(8, 2, rng);
  MeanCrossEntropy expr{&spec, &X, y};
  const MLPParams before = p;
  GradientVector a = gradient(expr, p.view());
  GradientVector b = gradient(expr, p.view());
  EXPECT_EQ(a, b);
  EXPECT_EQ(p, before);
  GradientVector v = a;
  EXPECT_EQ(hvp(expr, p.view(), v), hvp(expr, p.view(), v));
}

TEST(GradientTest, NonFiniteForwardIsNumericFaultNamingTheOp) {
  auto blowup = [](auto&, auto p) { return ad::sum(ad::scale(ad::scale(p[0], 1e300), 1e300)); };
  std::vector<Tensor> theta{row({1.0, 2.0})};
  try {
    (void)gradient(blowup, std::span<const Tensor>(theta));
    FAIL() << "expected NumericFault";
  } catch (const NumericFault& e) {
    EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos) << e.what();
  }
}

TEST(GradientTest, RootMustBeScalar) {
  auto not_scalar = [](auto&, auto p) { return p[0]; };
  std::vector<Tensor> theta{row({1.0, 2.0})};
  EXPECT_THROW((void)gradient(not_scalar, std::span<const Tensor>(theta)), ShapeMismatch);
}

TEST(HvpTest, IdentityHessian) {
  std::vector<Tensor> theta{row({0.7, -1.3, 2.0})};
  GradientVector v({row({1.0, -2.0, 0.5})});
  EXPECT_EQ(hvp(HalfSquaredNorm{}, std::span<const Tensor>(theta), v), v);
}

TEST(HvpTest, DiagonalQuadratic) {
  std::vector<Tensor> theta{row({0.3, -0.8})};
  GradientVector v({row({1.0, 1.0})});
  GradientVector hv = hvp(DiagonalQuadratic{row({2.0, 5.0})}, std::span<const Tensor>(theta), v);
  EXPECT_DOUBLE_EQ(hv[0][0], 2.0);
  EXPECT_DOUBLE_EQ(hv[0][1], 5.0);
}

TEST(HvpTest, LinearHasZeroHessian) {
  auto linear = [](auto&, auto p) { return ad::sum(ad::scale(p[0], Tensor::matrix(1, 3, {2, -1, 4}))); };
  std::vector<Tensor> theta{row({0.1, 0.2, 0.3})};
  GradientVector v({row({3.0, -1.0, 2.0})});
  for (HvpMode mode : {HvpMode::exact, HvpMode::finite_difference}) {
    GradientVector hv = hvp(linear, std::span<const Tensor>(theta), v, mode);
    for (double x : hv[0].data()) EXPECT_NEAR(x, 0.0, 1e-12);
  }
}

TEST(HvpTest, ExactMatchesFiniteDifferenceOnRandomMlps) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    MLPSpec spec{3, {6}, 3, trial % 2 ? Activation::relu : Activation::tanh};
    MLPParams p = testing::random_mlp(spec, 100 + trial);
    Tensor X = testing::random_matrix(10, 3, rng);
    std::vector<int> y = testing::random_labels(10, 3, rng);
    MeanCrossEntropy expr{&spec, &X, y};
    GradientVector v = GradientVector::zeros_like(p.view());
    std::normal_distribution<double> n;
    for (auto& s : v.segments())
      for (auto& x : s.data()) x = n(rng);
    GradientVector exact = hvp(expr, p.view(), v, HvpMode::exact);
    GradientVector fd = hvp(expr, p.view(), v, HvpMode::finite_difference);
    EXPECT_LT(testing::max_relative_error(exact, fd), 1e-4) << "trial " << trial;
  }
}

TEST(HvpTest, DirectionShapeMismatch) {
  std::vector<Tensor> theta{row({1.0, 2.0})};
  GradientVector v({row({1.0, 2.0, 3.0})});
  EXPECT_THROW((void)hvp(HalfSquaredNorm{}, std::span<const Tensor>(theta), v), ShapeMismatch);
}

TEST(GradDotTest, Examples) {
  EXPECT_DOUBLE_EQ(grad_dot(GradientVector({Tensor::vector({1, 2})}),
                            GradientVector({Tensor::vector({3, -1})})),
                   1.0);
  EXPECT_EQ(grad_dot(GradientVector({Tensor::vector({1, 0})}),
                     GradientVector({Tensor::vector({0, 5})})),
            0.0);
}

TEST(GradDotTest, SumsAcrossSegments) {
  GradientVector a({Tensor::vector({1, 2}), Tensor::matrix(1, 2, {3, 4})});
  GradientVector b({Tensor::vector({1, 1}), Tensor::matrix(1, 2, {-1, 2})});
  EXPECT_DOUBLE_EQ(grad_dot(a, b), 1 + 2 - 3 + 8);
}

TEST(GradDotTest, SymmetricBilinearAndNonnegativeOnSelf) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    GradientVector a({testing::random_matrix(3, 4, rng), Tensor::vector({n(rng), n(rng)})});
    GradientVector b({testing::random_matrix(3, 4, rng), Tensor::vector({n(rng), n(rng)})});
    EXPECT_EQ(grad_dot(a, b), grad_dot(b, a));
    EXPECT_GE(grad_dot(a, a), 0.0);
    GradientVector a2 = a;
    a2.scale(2.0);  // powers of two scale exactly
    EXPECT_EQ(grad_dot(a2, b), 2.0 * grad_dot(a, b));
    const double c = n(rng);
    GradientVector ac = a;
    ac.scale(c);
    EXPECT_NEAR(grad_dot(ac, b), c * grad_dot(a, b),
                1e-12 * (1.0 + std::abs(c * grad_dot(a, b))));
  }
}

TEST(GradDotTest, ShapeMismatch) {
  EXPECT_THROW((void)grad_dot(GradientVector({Tensor::vector({1, 2})}),
                              GradientVector({Tensor::vector({1, 2, 3})})),
               ShapeMismatch);
}

TEST(GradientVectorTest, FlattenUnflattenRoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> segs;
    for (int s = 0; s < 3; ++s) segs.push_back(testing::random_matrix(dim(rng), dim(rng), rng));
    segs.push_back(Tensor::vector({1.0, -2.0}));
    GradientVector g(segs);
    auto flat = g.flatten();
    EXPECT_EQ(flat.size(), g.total_len());
    auto shapes = g.shapes();
    EXPECT_EQ(GradientVector::unflatten(flat, shapes), g);
  }
}

}  // namespace
}  // namespace dgrl::ad
