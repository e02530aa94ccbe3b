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
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "dgrl/models/checkpoint.hpp"
#include "dgrl/models/mlp.hpp"
#include "test_support.hpp"

namespace dgrl {
namespace {

TEST(InitMlpTest, DeterministicPerSeed) {
  MLPSpec spec{2, {8}, 3, Activation::relu};
  EXPECT_EQ(init_mlp(spec, 17), init_mlp(spec, 17));
  EXPECT_NE(init_mlp(spec, 17), init_mlp(spec, 18));
}

TEST(InitMlpTest, ShapesAndZeroBiases) {
  MLPParams p = init_mlp(MLPSpec{2, {8}, 3, Activation::relu}, 0);
  ASSERT_EQ(p.tensors.size(), 4u);
  EXPECT_EQ(p.weight(0).shape(), (Shape{8, 2}));
  EXPECT_EQ(p.bias(0).shape(), (Shape{8}));
  EXPECT_EQ(p.weight(1).shape(), (Shape{3, 8}));
  EXPECT_EQ(p.bias(1).shape(), (Shape{3}));
  for (double b : p.bias(0).data()) EXPECT_EQ(b, 0.0);
}

TEST(InitMlpTest, RejectsInvalidSpecs) {
  EXPECT_THROW(init_mlp(MLPSpec{2, {}, 3, Activation::relu}, 0), InvalidInput);
  EXPECT_THROW(init_mlp(MLPSpec{2, {4}, 1, Activation::relu}, 0), InvalidInput);
  EXPECT_THROW(init_mlp(MLPSpec{0, {4}, 2, Activation::relu}, 0), InvalidInput);
}

TEST(ForwardTest, EmptyBatch) {
  MLPParams p = init_mlp(MLPSpec{2, {8, 5}, 3, Activation::relu}, 1);
  Tensor z = forward_features(p, Tensor(Shape{0, 2}));
  EXPECT_EQ(z.shape(), (Shape{0, 5}));
}

TEST(ForwardTest, DuplicateRowsGiveDuplicateFeatures) {
  MLPParams p = init_mlp(MLPSpec{2, {8, 5}, 3, Activation::tanh}, 1);
  Tensor z = forward_features(p, Tensor::matrix(2, 2, {0.4, -1.1, 0.4, -1.1}));
  for (std::size_t j = 0; j < z.cols(); ++j) EXPECT_EQ(z.at(0, j), z.at(1, j));
}

TEST(ForwardTest, HandBuiltReluUnit) {
  MLPParams p{MLPSpec{1, {1}, 2, Activation::relu},
              {Tensor::matrix(1, 1, {2.0}), Tensor::vector({-1.0}), Tensor::matrix(2, 1, {1.0, 0.0}),
               Tensor::vector({0.0, 0.0})}};
  Tensor z = forward_features(p, Tensor::matrix(1, 1, {1.0}));
  EXPECT_EQ(z.data(), std::vector<double>{1.0});
}

TEST(ForwardTest, HandBuiltLinearNet) {
  MLPParams p{MLPSpec{2, {}, 2, Activation::relu},
              {Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({0, 0})}};
  Tensor logits = forward_logits(p, Tensor::matrix(1, 2, {1.0, 0.0}));
  EXPECT_EQ(logits.data(), (std::vector<double>{1.0, 0.0}));
}

TEST(ForwardTest, ZeroClassifierGivesZeroLogits) {
  MLPParams p = init_mlp(MLPSpec{2, {6}, 3, Activation::relu}, 4);
  for (auto& v : p.weight(1).data()) v = 0.0;
  std::mt19937_64 rng(0);
  Tensor logits = forward_logits(p, testing::random_matrix(5, 2, rng));
  for (double v : logits.data()) EXPECT_EQ(v, 0.0);
}

TEST(ForwardTest, SoftmaxShiftInvariance) {
  std::mt19937_64 rng(2);
  Tensor logits = testing::random_matrix(4, 3, rng);
  Tensor shifted = logits;
  for (auto& v : shifted.data()) v += 123.456;
  Tensor a = softmax(logits), b = softmax(shifted);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(ForwardTest, LogitsAreClassifierOfFeatures) {
  std::mt19937_64 rng(8);
  MLPParams p = testing::random_mlp(MLPSpec{3, {7, 4}, 3, Activation::relu}, 3);
  Tensor X = testing::random_matrix(9, 3, rng);
  Tensor z = forward_features(p, X);
  Tensor logits = forward_logits(p, X);
  const Tensor& W = p.weight(2);
  const Tensor& b = p.bias(2);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < 4; ++j) acc += z.at(i, j) * W.at(c, j);
      EXPECT_NEAR(logits.at(i, c), acc + b[c], 1e-14);
    }
}

TEST(ForwardTest, RowEquivariance) {
  std::mt19937_64 rng(8);
  MLPParams p = testing::random_mlp(MLPSpec{3, {7}, 2, Activation::tanh}, 3);
  Tensor X = testing::random_matrix(5, 3, rng);
  Tensor Xr(X.shape());
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) Xr.at(i, j) = X.at(perm[i], j);
  Tensor a = forward_logits(p, X), b = forward_logits(p, Xr);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(b.at(i, c), a.at(perm[i], c));
}

TEST(ForwardTest, InputWidthMismatch) {
  MLPParams p = init_mlp(MLPSpec{3, {4}, 2, Activation::relu}, 0);
  EXPECT_THROW(forward_logits(p, Tensor(Shape{2, 2})), ShapeMismatch);
}

double ce_of_logits(const Tensor& logits, const std::vector<int>& y) {
  ad::Tape<double> tape;
  return cross_entropy(tape.constant(logits), std::span<const int>(y)).value()[0];
}

TEST(CrossEntropyTest, UniformLogitsGiveLogTwo) {
  EXPECT_NEAR(ce_of_logits(Tensor::matrix(2, 2, {0.3, 0.3, -1.0, -1.0}), {0, 1}), std::log(2.0),
              1e-15);
}

TEST(CrossEntropyTest, DecreasesWithMargin) {
  double prev = INFINITY;
  for (double margin = 0.0; margin < 10.0; margin += 0.5) {
    const double loss = ce_of_logits(Tensor::matrix(1, 3, {margin, 0.0, 0.0}), {0});
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(CrossEntropyTest, PermutationInvariant) {
  Tensor a = Tensor::matrix(3, 2, {1.0, -0.5, 0.2, 0.9, -2.0, 0.3});
  Tensor b = Tensor::matrix(3, 2, {0.2, 0.9, -2.0, 0.3, 1.0, -0.5});
  EXPECT_NEAR(ce_of_logits(a, {0, 1, 1}), ce_of_logits(b, {1, 1, 0}), 1e-15);
}

TEST(CrossEntropyTest, EmptyBatchIsInvalid) {
  EXPECT_THROW(ce_of_logits(Tensor(Shape{0, 2}), {}), InvalidInput);
}

TEST(CrossEntropyTest, LabelOutOfRange) {
  EXPECT_THROW(ce_of_logits(Tensor::matrix(1, 2, {0.0, 0.0}), {2}), InvalidInput);
}

TEST(CrossEntropyTest, LogitGradientRowsSumToZero) {
  std::mt19937_64 rng(6);
  std::vector<Tensor> logits{testing::random_matrix(7, 4, rng, 3.0)};
  std::vector<int> y = testing::random_labels(7, 4, rng);
  auto expr = [&](auto&, auto p) { return cross_entropy(p[0], std::span<const int>(y)); };
  ad::GradientVector g = ad::gradient(expr, std::span<const Tensor>(logits));
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += g[0].at(i, c);
    EXPECT_NEAR(s, 0.0, 1e-10);
  }
}

TEST(CheckpointTest, BinaryRoundTripIsBitExact) {
  MLPParams p = testing::random_mlp(MLPSpec{5, {7, 3}, 4, Activation::tanh}, 99);
  p.weight(0)[0] = -0.0;
  p.weight(0)[1] = std::nextafter(1.0, 2.0);
  std::stringstream ss;
  write_params_binary(ss, p);
  MLPParams q = read_params_binary(ss);
  ASSERT_EQ(q.spec, p.spec);
  for (std::size_t t = 0; t < p.tensors.size(); ++t)
    for (std::size_t i = 0; i < p.tensors[t].size(); ++i) {
      double a = p.tensors[t][i], b = q.tensors[t][i];
      EXPECT_EQ(std::memcmp(&a, &b, sizeof(double)), 0);
    }
}

TEST(CheckpointTest, JsonRoundTrip) {
  MLPParams p = testing::random_mlp(MLPSpec{2, {4}, 3, Activation::relu}, 5);
  EXPECT_EQ(params_from_json(nlohmann::json::parse(params_to_json(p).dump())), p);
}

TEST(CheckpointTest, FileRoundTripBothFormats) {
  MLPParams p = testing::random_mlp(MLPSpec{2, {4}, 3, Activation::relu}, 5);
  const std::string bin = ::testing::TempDir() + "/params.bin";
  const std::string js = ::testing::TempDir() + "/params.json";
  save_params(bin, p, true);
  save_params(js, p, false);
  EXPECT_EQ(load_params(bin), p);
  EXPECT_EQ(load_params(js), p);
  std::remove(bin.c_str());
  std::remove(js.c_str());
}

TEST(CheckpointTest, RejectsGarbage) {
  std::stringstream ss("NOTAPARAMFILE");
  EXPECT_THROW(read_params_binary(ss), InvalidInput);
}

}  // namespace
}  // namespace dgrl
