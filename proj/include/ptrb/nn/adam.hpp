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


#ifndef PTRB_NN_ADAM_HPP
#define PTRB_NN_ADAM_HPP

#include <cmath>
#include <string>

#include "ptrb/core.hpp"
#include "ptrb/nn/backprop.hpp"
#include "ptrb/nn/layer.hpp"

namespace ptrb {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("adam: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("adam: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
    if (weight_decay < 0.0) throw ConfigError("adam: weight_decay must be >= 0");
  }
};

/// One bias-corrected Adam update of `layer`. Missing moment buffers (as in
/// a restored snapshot) start from zero. `layer_index` only feeds the
/// diagnostic raised on non-finite gradients.
inline void adam_step(LayerState& layer, const LayerGradient& grad, const AdamConfig& cfg,
                      std::size_t layer_index = 0) {
  require_same_shape(layer.weights, grad.weights, "adam_step");
  if (grad.bias.size() != layer.bias.size()) {
    throw DimensionError("adam_step: bias gradient size mismatch");
  }
  if (!grad.weights.allFinite() || !grad.bias.allFinite()) {
    throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(layer_index));
  }
  if (layer.adam_m.rows() != layer.weights.rows() || layer.adam_m.cols() != layer.weights.cols()) {
    layer.adam_m = Matrix::Zero(layer.weights.rows(), layer.weights.cols());
    layer.adam_v = Matrix::Zero(layer.weights.rows(), layer.weights.cols());
    layer.bias_m = Vector::Zero(layer.bias.size());
    layer.bias_v = Vector::Zero(layer.bias.size());
    layer.step_count = 0;
  }
  layer.step_count += 1;
  const double t = static_cast<double>(layer.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);

  auto update = [&](auto& param, auto& m, auto& v, const auto& g_raw) {
    if (cfg.weight_decay != 0.0) {
      const auto g = (g_raw + cfg.weight_decay * param).eval();
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    } else {
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g_raw;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g_raw.cwiseProduct(g_raw);
    }
    param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  update(layer.weights, layer.adam_m, layer.adam_v, grad.weights);
  update(layer.bias, layer.bias_m, layer.bias_v, grad.bias);
}

inline void adam_step(Network& net, const Gradients& grads, const AdamConfig& cfg) {
  if (grads.size() != net.size()) throw DimensionError("adam_step: gradient/layer count mismatch");
  for (std::size_t l = 0; l < net.size(); ++l) adam_step(net[l], grads[l], cfg, l);
}

}  // namespace ptrb

#endif  // PTRB_NN_ADAM_HPP
