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


#ifndef PTRB_NN_BACKPROP_HPP
#define PTRB_NN_BACKPROP_HPP

#include <optional>
#include <string>
#include <vector>

#include "ptrb/core.hpp"
#include "ptrb/nn/dropout.hpp"
#include "ptrb/nn/layer.hpp"
#include "ptrb/nn/loss.hpp"

namespace ptrb {

struct LayerGradient {
  Matrix weights;
  Vector bias;
};

using Gradients = std::vector<LayerGradient>;

/// Everything the backward pass needs from a training-mode forward pass.
struct ForwardTrace {
  // outputs[0] is the batch input; outputs[l + 1] is what layer l hands to
  // layer l + 1 (after dropout, when dropout is active there).
  std::vector<Matrix> outputs;
  // Activation values before dropout and the scaled keep-masks, per layer.
  std::vector<std::optional<Matrix>> pre_dropout;
  std::vector<std::optional<Matrix>> dropout_scale;

  const Matrix& prediction() const { return outputs.back(); }
};

inline ForwardTrace forward_trace(const Network& net, const Matrix& input,
                                  const DropoutPlan& dropout = {}, Rng* rng = nullptr) {
  ForwardTrace t;
  t.outputs.reserve(net.size() + 1);
  t.outputs.push_back(input);
  t.pre_dropout.resize(net.size());
  t.dropout_scale.resize(net.size());
  for (std::size_t l = 0; l < net.size(); ++l) {
    Matrix a = dense_forward(net[l], t.outputs.back());
    if (dropout.active_after(l) && l + 1 < net.size()) {
      if (rng == nullptr) throw Error("forward_trace: dropout requested without an rng");
      DropoutMask m = dropout_mask(a.rows(), a.cols(), dropout.rate, *rng);
      Matrix scale = m.keep * m.scale;
      Matrix dropped = a.cwiseProduct(scale);
      t.pre_dropout[l] = std::move(a);
      t.dropout_scale[l] = std::move(scale);
      t.outputs.push_back(std::move(dropped));
    } else {
      t.outputs.push_back(std::move(a));
    }
  }
  return t;
}

struct BackwardResult {
  double loss = 0.0;
  Gradients grads;
};

/// Analytic backpropagation through the dense stack.
///
/// Pruned (masked) weights are not special-cased: they receive the same
/// gradient as any other weight, which is what lets them regrow between
/// perturbation events.
inline BackwardResult backward(const Network& net, const ForwardTrace& trace, const Matrix& target,
                               LossKind loss_kind) {
  if (net.empty()) throw Error("backward: empty network");
  check_loss_compatible(loss_kind, net.back().activation);
  LossResult loss = compute_loss(loss_kind, target, trace.prediction());

  // delta = dLoss / d(pre-activation) of the current layer.
  Matrix delta;
  if (loss_kind == LossKind::mse) {
    delta = loss.grad.cwiseProduct(activation_grad(net.back().activation, trace.prediction()));
  } else {
    delta = std::move(loss.grad);
  }

  BackwardResult out{loss.value, Gradients(net.size())};
  for (std::size_t l = net.size(); l-- > 0;) {
    const Matrix& input = trace.outputs[l];
    out.grads[l].weights.noalias() = delta.transpose() * input;
    out.grads[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix upstream = delta * net[l].weights;  // dLoss / d(outputs[l])
    const std::size_t prev = l - 1;
    if (trace.dropout_scale[prev]) {
      upstream = upstream.cwiseProduct(*trace.dropout_scale[prev]);
      delta = upstream.cwiseProduct(activation_grad(net[prev].activation, *trace.pre_dropout[prev]));
    } else {
      delta = upstream.cwiseProduct(activation_grad(net[prev].activation, input));
    }
  }
  return out;
}

/// Convenience overload: evaluation-mode forward pass followed by backward.
inline BackwardResult backward(const Network& net, const Matrix& batch, const Matrix& target,
                               LossKind loss_kind) {
  return backward(net, forward_trace(net, batch), target, loss_kind);
}

/// Evaluation-mode loss of `net` on (input, target).
inline double evaluate_loss(const Network& net, const Matrix& input, const Matrix& target,
                            LossKind loss_kind) {
  return compute_loss(loss_kind, target, forward(net, input)).value;
}

}  // namespace ptrb

#endif  // PTRB_NN_BACKPROP_HPP
