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

#include <sstream>

#include "ptrb/perturbation.hpp"
#include "ptrb_test_support.hpp"

namespace ptrb {
namespace {

// Independent rule: entry is pruned iff strictly inside (min*tau/100, max*tau/100).
Matrix oracle_mask(const Matrix& w, double tau) {
  double lo = w(0, 0), hi = w(0, 0);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    lo = std::min(lo, w.data()[i]);
    hi = std::max(hi, w.data()[i]);
  }
  lo = lo * tau / 100.0;
  hi = hi * tau / 100.0;
  Matrix m(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) m.data()[i] = (w.data()[i] > lo && w.data()[i] < hi) ? 0.0 : 1.0;
  return m;
}

TEST(ThresholdMask, SymmetricRangeTauFivePrunesInsideHalf) {
  Matrix w(3, 4);
  w << 10, -10, 0.49, -0.49, 0.5, -0.5, 0.0, 0.51, -0.51, 3, -3, 1e-9;
  const Matrix m = threshold_mask(w, 5.0);
  Matrix expect(3, 4);
  expect << 1, 1, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0;
  EXPECT_EQ(m, expect);
}

TEST(ThresholdMask, MatchesOracleOnRandomMatrices) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix w = testing::random_matrix(rng, 1 + rng.index(8), 1 + rng.index(8), -rng.uniform(0.1, 5), rng.uniform(0.1, 5));
    const double tau = rng.uniform(0, 50);
    ASSERT_EQ(threshold_mask(w, tau), oracle_mask(w, tau));
  }
}

TEST(ThresholdMask, TauZeroPrunesNothing) {
  Rng rng(2);
  Matrix w = testing::random_matrix(rng, 5, 5);
  w(0, 0) = 0.0;
  EXPECT_TRUE((threshold_mask(w, 0.0).array() == 1.0).all());
}

TEST(ThresholdMask, SameSignedLayerUsesLiteralBounds) {
  Matrix w(1, 4);
  w << 1, 2, 3, 10;
  EXPECT_TRUE((threshold_mask(w, 5.0).array() == 1.0).all());  // bounds (0.05, 0.5)
  w << 0.1, 2, 3, 10;  // bounds (0.04, 4): everything but the max
  EXPECT_EQ(threshold_mask(w, 40.0), (Matrix(1, 4) << 0, 0, 0, 1).finished());
}

TEST(ThresholdMask, NeverPrunesExtremesBelowFifty) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix w = testing::random_matrix(rng, 4, 6);
    Eigen::Index r, c;
    const Matrix m = threshold_mask(w, 49.9);
    w.maxCoeff(&r, &c);
    EXPECT_EQ(m(r, c), 1.0);
    w.minCoeff(&r, &c);
    EXPECT_EQ(m(r, c), 1.0);
  }
}

TEST(ThresholdMask, ZeroSetGrowsWithTau) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix w = testing::random_matrix(rng, 6, 6);
    std::size_t prev = 0;
    Matrix prev_mask = Matrix::Ones(6, 6);
    for (double tau : {0.0, 5.0, 10.0, 15.0, 20.0, 25.0}) {
      const Matrix m = threshold_mask(w, tau);
      EXPECT_GE(count_zeros(m), prev);
      EXPECT_TRUE(((prev_mask.array() == 0.0) <= (m.array() == 0.0)).all()) << "nesting at tau " << tau;
      prev = count_zeros(m);
      prev_mask = m;
    }
  }
}

TEST(ThresholdMask, Errors) {
  EXPECT_THROW(threshold_mask(Matrix(0, 0), 5.0), DimensionError);
  EXPECT_THROW(threshold_mask(Matrix::Ones(2, 2), -1.0), ConfigError);
}

TEST(AccumulateMask, HadamardProductUnionOfZeros) {
  Matrix a(1, 4), b(1, 4);
  a << 1, 0, 1, 0;
  b << 1, 1, 0, 0;
  EXPECT_EQ(accumulate_mask(a, b), (Matrix(1, 4) << 1, 0, 0, 0).finished());
  EXPECT_THROW(accumulate_mask(a, Matrix::Ones(2, 2)), DimensionError);
}

TEST(ApplyMask, ZerosWeightsOnlyWhereMasked) {
  LayerState l = make_layer(2, 2, Activation::relu);
  l.weights << 1, -2, 3, -4;
  l.bias << 5, 6;
  l.adam_m = Matrix::Constant(2, 2, 0.5);
  apply_mask(l, (Matrix(2, 2) << 1, 0, 0, 1).finished());
  EXPECT_EQ(l.weights, (Matrix(2, 2) << 1, 0, 0, -4).finished());
  EXPECT_EQ(l.bias, (Vector(2) << 5, 6).finished());
  EXPECT_EQ(l.adam_m, Matrix::Constant(2, 2, 0.5));
}

TEST(ApplyMask, ProducesPositiveZero) {
  LayerState l = make_layer(1, 1, Activation::relu);
  l.weights << -0.001;
  apply_mask(l, Matrix::Zero(1, 1));
  EXPECT_FALSE(std::signbit(l.weights(0, 0)));
}

TEST(PerturbEvent, CumulativeMaskIsProductOfEventMasks) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Network net = testing::random_network(rng, {5, 4, 3}, Activation::relu, Activation::linear);
    PerturbConfig cfg{true, rng.uniform(1, 40), 30, true};
    std::vector<Matrix> product;
    for (const auto& l : net) product.push_back(Matrix::Ones(l.weights.rows(), l.weights.cols()));
    double last_fraction = 0.0;
    for (int e = 1; e <= 4; ++e) {
      std::vector<Matrix> fresh;
      for (const auto& l : net) fresh.push_back(threshold_mask(l.weights, cfg.tau));
      const PerturbEvent ev = perturb_event(net, cfg, 30 * e);
      for (std::size_t l = 0; l < net.size(); ++l) {
        product[l] = product[l].cwiseProduct(fresh[l]);
        EXPECT_EQ(net[l].mask, product[l]);
        for (Eigen::Index i = 0; i < net[l].mask.size(); ++i) {
          if (net[l].mask.data()[i] == 0.0) {
            EXPECT_EQ(net[l].weights.data()[i], 0.0);
          }
        }
      }
      EXPECT_GE(ev.cumulative_zero_fraction, last_fraction);
      EXPECT_DOUBLE_EQ(ev.cumulative_zero_fraction, sparsity(product) / 100.0);
      last_fraction = ev.cumulative_zero_fraction;
      // Simulated training between events: nudge all weights, pruned ones regrow.
      for (auto& l : net) l.weights += testing::random_matrix(rng, l.weights.rows(), l.weights.cols(), -0.05, 0.05);
    }
  }
}

TEST(PerturbEvent, NonCumulativeUsesOnlyFreshMask) {
  LayerState l = make_layer(3, 1, Activation::linear);
  l.weights << 1.0, -1.0, 0.01;
  Network net{l};
  PerturbConfig cfg{true, 5.0, 30, false};
  perturb_event(net, cfg, 30);
  EXPECT_EQ(net[0].mask, (Matrix(1, 3) << 1, 1, 0).finished());
  net[0].weights << 1.0, 0.02, -1.0;  // position 2 regrew, position 1 shrank
  perturb_event(net, cfg, 60);
  EXPECT_EQ(net[0].mask, (Matrix(1, 3) << 1, 0, 1).finished());
}

TEST(PerturbEvent, CountsNewlyPrunedWeights) {
  LayerState l = make_layer(4, 1, Activation::linear);
  l.weights << 2.0, -2.0, 0.05, 0.0;
  Network net{l};
  const PerturbEvent ev = perturb_event(net, PerturbConfig{true, 5.0, 30, true}, 30);
  EXPECT_EQ(ev.pruned_per_layer, std::vector<std::size_t>{1});
  EXPECT_DOUBLE_EQ(ev.layer_zero_fraction[0], 0.5);
  EXPECT_EQ(ev.epoch, 30u);
}

TEST(Schedule, EveryIntervalEpoch) {
  const PerturbConfig cfg{true, 5.0, 30, true};
  std::vector<std::size_t> fired;
  for (std::size_t e = 1; e <= 100; ++e) {
    if (schedule_should_perturb(e, cfg, 100)) fired.push_back(e);
  }
  EXPECT_EQ(fired, (std::vector<std::size_t>{30, 60, 90}));
  EXPECT_EQ(scheduled_event_count(cfg, 1000), 33u);
  EXPECT_EQ(scheduled_event_count(cfg, 29), 0u);
  EXPECT_EQ(scheduled_event_count(PerturbConfig{false, 5.0, 30, true}, 1000), 0u);
  EXPECT_FALSE(schedule_should_perturb(0, cfg, 100));
  EXPECT_FALSE(schedule_should_perturb(120, cfg, 100));
}

TEST(PerturbConfig, Validation) {
  EXPECT_NO_THROW((PerturbConfig{true, 0.0, 11, true}).validate());
  EXPECT_THROW((PerturbConfig{true, 50.0, 30, true}).validate(), ConfigError);
  EXPECT_THROW((PerturbConfig{true, -1.0, 30, true}).validate(), ConfigError);
  EXPECT_THROW((PerturbConfig{true, 5.0, 10, true}).validate(), ConfigError);
}

TEST(Sparsity, MaskAndWeightPercentages) {
  LayerState a = make_layer(2, 2, Activation::relu), b = make_layer(2, 1, Activation::linear);
  a.mask(0, 0) = 0.0;
  b.mask(0, 1) = 0.0;
  a.weights << 0, 1, 1, 1;
  b.weights << 1, 1;
  const Network net{a, b};
  EXPECT_DOUBLE_EQ(mask_sparsity(net), 100.0 * 2 / 6);
  EXPECT_DOUBLE_EQ(weight_sparsity(net), 100.0 / 6);
  EXPECT_DOUBLE_EQ(sparsity({a.mask, b.mask}), 100.0 * 2 / 6);
  EXPECT_EQ(sparsity({}), 0.0);
}

TEST(EventLogCsv, OneRowPerLayerPerEvent) {
  PerturbEventLog log{PerturbEvent{30, {3, 1}, {0.25, 0.5}, 0.3}, PerturbEvent{60, {2, 0}, {0.5, 0.5}, 0.5}};
  std::ostringstream os;
  write_event_log_csv(os, log);
  EXPECT_EQ(os.str(),
            "epoch,layer_index,pruned_this_event,cumulative_zero_fraction\n"
            "30,0,3,0.25\n30,1,1,0.5\n60,0,2,0.5\n60,1,0,0.5\n");
}

}  // namespace
}  // namespace ptrb
