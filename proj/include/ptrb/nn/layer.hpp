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


#ifndef PTRB_NN_LAYER_HPP
#define PTRB_NN_LAYER_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ptrb/core.hpp"

namespace ptrb {

enum class Activation : std::uint8_t { relu = 0, sigmoid = 1, softmax = 2, linear = 3 };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::linear: return "linear";
  }
  return "?";
}

/// One dense layer: out = act(in * W^T + b).
///
/// `mask` holds the cumulative prune mask for W (1 = kept, 0 = pruned). The
/// mask is only applied to W at perturbation events; between events the
/// weights train freely. Adam moments live beside the parameters they track.
struct LayerState {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::linear;
  Matrix mask;     // same shape as weights, entries in {0, 1}
  Matrix adam_m;
  Matrix adam_v;
  Vector bias_m;
  Vector bias_v;
  std::int64_t step_count = 0;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

using Network = std::vector<LayerState>;

/// A zero-initialised layer with an all-ones mask.
inline LayerState make_layer(Eigen::Index in, Eigen::Index out, Activation act) {
  if (in < 1 || out < 1) {
    throw DimensionError("make_layer: invalid dims " + shape_str(out, in));
  }
  LayerState l;
  l.weights = Matrix::Zero(out, in);
  l.bias = Vector::Zero(out);
  l.activation = act;
  l.mask = Matrix::Ones(out, in);
  l.adam_m = Matrix::Zero(out, in);
  l.adam_v = Matrix::Zero(out, in);
  l.bias_m = Vector::Zero(out);
  l.bias_v = Vector::Zero(out);
  return l;
}

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline LayerState init_layer(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
  LayerState l = make_layer(in, out, act);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (Eigen::Index i = 0; i < out; ++i) {
    for (Eigen::Index j = 0; j < in; ++j) l.weights(i, j) = rng.uniform(-limit, limit);
  }
  return l;
}

/// Applies `act` in place to a matrix of pre-activations.
inline void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
    case Activation::softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp().matrix();
        row /= row.sum();
      }
      break;
    case Activation::linear:
      break;
  }
}

/// Forward pass of a single layer over a batch (one sample per row).
inline Matrix dense_forward(const LayerState& layer, const Matrix& input) {
  if (input.cols() != layer.weights.cols()) {
    throw DimensionError("dense_forward: input " + shape_str(input.rows(), input.cols()) +
                         " incompatible with weights " +
                         shape_str(layer.weights.rows(), layer.weights.cols()));
  }
  Matrix z = input * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  apply_activation(layer.activation, z);
  return z;
}

/// Derivative of the activation expressed through its output value.
/// Softmax is rejected: its Jacobian is fused with the cross-entropy loss.
inline Matrix activation_grad(Activation act, const Matrix& activated) {
  switch (act) {
    case Activation::relu:
      return (activated.array() > 0.0).cast<double>().matrix();
    case Activation::sigmoid:
      return (activated.array() * (1.0 - activated.array())).matrix();
    case Activation::linear:
      return Matrix::Ones(activated.rows(), activated.cols());
    case Activation::softmax:
      break;
  }
  throw Error("activation_grad: softmax derivative is only available fused with cross-entropy");
}

/// Inference through a whole network (no dropout).
inline Matrix forward(const Network& net, const Matrix& input) {
  Matrix a = input;
  for (const auto& layer : net) a = dense_forward(layer, a);
  return a;
}

inline std::size_t weight_count(const Network& net) {
  std::size_t n = 0;
  for (const auto& l : net) n += static_cast<std::size_t>(l.weights.size());
  return n;
}

}  // namespace ptrb

#endif  // PTRB_NN_LAYER_HPP
