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


#ifndef PTRB_NN_LOSS_HPP
#define PTRB_NN_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string_view>

#include "ptrb/core.hpp"
#include "ptrb/nn/layer.hpp"

namespace ptrb {

enum class LossKind : std::uint8_t { mse, bce, cross_entropy };

inline std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::bce: return "bce";
    case LossKind::cross_entropy: return "cross_entropy";
  }
  return "?";
}

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before log.
inline constexpr double kProbClamp = 1e-7;

/// Loss value plus its gradient. For MSE the gradient is taken with respect
/// to the network output; for BCE/CE it is the fused gradient with respect
/// to the output layer's pre-activation (sigmoid/softmax folded in).
struct LossResult {
  double value = 0.0;
  Matrix grad;
};

/// Mean over the batch of the per-sample squared L2 distance.
inline LossResult mse_loss(const Matrix& target, const Matrix& output) {
  require_same_shape(target, output, "mse_loss");
  const auto batch = static_cast<double>(std::max<Eigen::Index>(target.rows(), 1));
  const Matrix diff = target - output;
  return {diff.squaredNorm() / batch, (-2.0 / batch) * diff};
}

/// Binary cross-entropy for a single sigmoid output column.
inline LossResult bce_loss(const Matrix& labels, const Matrix& probs) {
  require_same_shape(labels, probs, "bce_loss");
  if (labels.cols() != 1) throw DimensionError("bce_loss: expects a single output column");
  const auto batch = static_cast<double>(std::max<Eigen::Index>(labels.rows(), 1));
  double total = 0.0;
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    const double y = labels(i, 0);
    if (y != 0.0 && y != 1.0) {
      throw DataError("bce_loss: label " + std::to_string(y) + " at row " + std::to_string(i) +
                      " is not in {0,1}");
    }
    const double p = std::clamp(probs(i, 0), kProbClamp, 1.0 - kProbClamp);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return {total / batch, (probs - labels) / batch};
}

inline LossResult bce_loss(const Vector& labels, const Vector& probs) {
  return bce_loss(Matrix(labels), Matrix(probs));
}

/// Categorical cross-entropy against one-hot targets.
inline LossResult ce_loss(const Matrix& onehot, const Matrix& probs) {
  require_same_shape(onehot, probs, "ce_loss");
  const auto batch = static_cast<double>(std::max<Eigen::Index>(onehot.rows(), 1));
  double total = 0.0;
  for (Eigen::Index i = 0; i < onehot.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index j = 0; j < onehot.cols(); ++j) {
      const double y = onehot(i, j);
      if (y == 1.0) {
        ++ones;
        total -= std::log(std::clamp(probs(i, j), kProbClamp, 1.0 - kProbClamp));
      } else if (y != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw DataError("ce_loss: row " + std::to_string(i) + " is not one-hot");
  }
  return {total / batch, (probs - onehot) / batch};
}

inline LossResult compute_loss(LossKind kind, const Matrix& target, const Matrix& output) {
  switch (kind) {
    case LossKind::mse: return mse_loss(target, output);
    case LossKind::bce: return bce_loss(target, output);
    case LossKind::cross_entropy: return ce_loss(target, output);
  }
  throw Error("compute_loss: unknown loss kind");
}

/// Rejects loss/output-activation pairs the fused gradients do not cover.
inline void check_loss_compatible(LossKind kind, Activation output_act) {
  const bool ok = (kind == LossKind::mse && output_act != Activation::softmax) ||
                  (kind == LossKind::bce && output_act == Activation::sigmoid) ||
                  (kind == LossKind::cross_entropy && output_act == Activation::softmax);
  if (!ok) {
    throw Error("loss " + std::string(to_string(kind)) + " is incompatible with output activation " +
                std::string(to_string(output_act)));
  }
}

/// Integer labels to a one-hot matrix with `classes` columns.
inline Matrix one_hot(const std::vector<int>& labels, int classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " out of range [0," +
                      std::to_string(classes) + ")");
    }
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

}  // namespace ptrb

#endif  // PTRB_NN_LOSS_HPP
