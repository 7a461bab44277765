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


#ifndef PTRB_NN_REGULARIZATION_HPP
#define PTRB_NN_REGULARIZATION_HPP

#include <cstdint>
#include <string_view>

#include "ptrb/core.hpp"
#include "ptrb/nn/backprop.hpp"
#include "ptrb/nn/layer.hpp"

namespace ptrb {

enum class Penalty : std::uint8_t { none, l1, l2 };

inline std::string_view to_string(Penalty p) {
  switch (p) {
    case Penalty::none: return "none";
    case Penalty::l1: return "l1";
    case Penalty::l2: return "l2";
  }
  return "?";
}

struct RegConfig {
  Penalty kind = Penalty::none;
  double lambda = 0.0;

  bool active() const { return kind != Penalty::none && lambda != 0.0; }
};

/// Weight penalty over every layer's W (biases are not penalised).
/// L1 = lambda * sum|w|, L2 = lambda * sum w^2. Gradient additions are
/// returned per layer in the same order as the network.
struct PenaltyResult {
  double value = 0.0;
  std::vector<Matrix> grads;
};

inline PenaltyResult reg_penalty(const Network& net, Penalty kind, double lambda) {
  if (lambda < 0.0) throw ConfigError("reg_penalty: lambda must be >= 0");
  PenaltyResult r;
  r.grads.reserve(net.size());
  for (const auto& l : net) {
    const Matrix& w = l.weights;
    switch (kind) {
      case Penalty::none:
        r.grads.push_back(Matrix::Zero(w.rows(), w.cols()));
        break;
      case Penalty::l1:
        r.value += lambda * w.cwiseAbs().sum();
        r.grads.push_back(lambda * w.unaryExpr([](double v) {
          return static_cast<double>((v > 0.0) - (v < 0.0));
        }));
        break;
      case Penalty::l2:
        r.value += lambda * w.squaredNorm();
        r.grads.push_back(2.0 * lambda * w);
        break;
    }
  }
  return r;
}

/// Adds the penalty gradient into `grads` in place; returns the penalty.
inline double add_penalty(const Network& net, const RegConfig& reg, Gradients& grads) {
  if (!reg.active()) return 0.0;
  PenaltyResult p = reg_penalty(net, reg.kind, reg.lambda);
  for (std::size_t l = 0; l < grads.size(); ++l) grads[l].weights += p.grads[l];
  return p.value;
}

}  // namespace ptrb

#endif  // PTRB_NN_REGULARIZATION_HPP
