// Copyright 2026 The ptrb Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "ptrb/nn/loss.hpp"
#include "ptrb_test_support.hpp"

namespace ptrb {
namespace {

TEST(MseLoss, SumOfSquaresAveragedOverBatch) {
  Matrix t(2, 2), y(2, 2);
  t << 1, 2, 3, 4;
  y << 1, 1, 1, 1;
  const LossResult r = mse_loss(t, y);
  EXPECT_DOUBLE_EQ(r.value, (0 + 1 + 4 + 9) / 2.0);
  EXPECT_DOUBLE_EQ(r.grad(1, 1), -2.0 * 3.0 / 2.0);
}

TEST(MseLoss, ZeroForIdenticalAndShapeChecked) {
  Rng rng(1);
  const Matrix a = testing::random_matrix(rng, 3, 4);
  EXPECT_EQ(mse_loss(a, a).value, 0.0);
  EXPECT_THROW(mse_loss(a, Matrix::Zero(4, 3)), DimensionError);
}

TEST(BceLoss, KnownValue) {
  Matrix labels(2, 1), probs(2, 1);
  labels << 1, 0;
  probs << 0.8, 0.4;
  const LossResult r = bce_loss(labels, probs);
  EXPECT_NEAR(r.value, -(std::log(0.8) + std::log(0.6)) / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(r.grad(0, 0), (0.8 - 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.grad(1, 0), 0.4 / 2.0);
}

TEST(BceLoss, ClampKeepsLossFinite) {
  Matrix labels(2, 1), probs(2, 1);
  labels << 1, 0;
  probs << 0.0, 1.0;
  const LossResult r = bce_loss(labels, probs);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_NEAR(r.value, -std::log(kProbClamp), 1e-9);
}

TEST(BceLoss, RejectsNonBinaryLabels) {
  Matrix labels(1, 1), probs(1, 1);
  labels << 0.5;
  probs << 0.5;
  EXPECT_THROW(bce_loss(labels, probs), DataError);
}

TEST(CeLoss, KnownValueAndOneHotCheck) {
  Matrix onehot(2, 3), probs(2, 3);
  onehot << 0, 1, 0, 1, 0, 0;
  probs << 0.2, 0.5, 0.3, 0.1, 0.6, 0.3;
  const LossResult r = ce_loss(onehot, probs);
  EXPECT_NEAR(r.value, -(std::log(0.5) + std::log(0.1)) / 2.0, 1e-15);
  Matrix bad = onehot;
  bad(0, 0) = 1;
  EXPECT_THROW(ce_loss(bad, probs), DataError);
}

TEST(CheckLossCompatible, PairsHeadsWithLosses) {
  EXPECT_NO_THROW(check_loss_compatible(LossKind::mse, Activation::linear));
  EXPECT_NO_THROW(check_loss_compatible(LossKind::bce, Activation::sigmoid));
  EXPECT_NO_THROW(check_loss_compatible(LossKind::cross_entropy, Activation::softmax));
  EXPECT_THROW(check_loss_compatible(LossKind::bce, Activation::softmax), Error);
  EXPECT_THROW(check_loss_compatible(LossKind::cross_entropy, Activation::sigmoid), Error);
  EXPECT_THROW(check_loss_compatible(LossKind::mse, Activation::softmax), Error);
}

TEST(OneHot, EncodesAndValidates) {
  const Matrix m = one_hot({2, 0}, 3);
  EXPECT_EQ(m, (Matrix(2, 3) << 0, 0, 1, 1, 0, 0).finished());
  EXPECT_THROW(one_hot({3}, 3), Error);
}

}  // namespace
}  // namespace ptrb
