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


#ifndef PTRB_PERTURBATION_HPP
#define PTRB_PERTURBATION_HPP

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "ptrb/core.hpp"
#include "ptrb/nn/layer.hpp"

// Periodic prune-and-regrow of dense weights.
//
// At every scheduled event each layer gets a fresh threshold mask from its
// current weights. The fresh mask is folded into the layer's cumulative mask
// by elementwise product, and the cumulative mask is multiplied into W.
// Nothing is masked between events, so pruned positions keep receiving
// gradients and can regrow from zero.

namespace ptrb {

struct PerturbConfig {
  bool enabled = false;
  double tau = 5.0;                  // percent of the layer's min/max weight
  std::size_t interval_epochs = 30;  // must exceed 10
  bool cumulative = true;            // false: each event uses only its own mask

  void validate() const {
    if (!(tau >= 0.0 && tau < 50.0)) {
      throw ConfigError("perturb: tau must lie in [0, 50), got " + std::to_string(tau));
    }
    if (interval_epochs <= 10) {
      throw ConfigError("perturb: interval_epochs must be > 10, got " +
                        std::to_string(interval_epochs));
    }
  }
};

/// 0 where min(W)*tau% < w < max(W)*tau% (open interval, per matrix), else 1.
/// An empty interval (tau = 0, or a same-signed W whose bounds cross)
/// prunes nothing.
inline Matrix threshold_mask(const Matrix& w, double tau) {
  if (w.size() == 0) throw DimensionError("threshold_mask: empty weight matrix");
  if (tau < 0.0) throw ConfigError("threshold_mask: tau must be >= 0");
  const double lo = w.minCoeff() * tau / 100.0;
  const double hi = w.maxCoeff() * tau / 100.0;
  return w.unaryExpr([lo, hi](double v) { return (lo < v && v < hi) ? 0.0 : 1.0; });
}

/// Hadamard product of two masks; the zero set of the result is the union.
inline Matrix accumulate_mask(const Matrix& prev, const Matrix& fresh) {
  require_same_shape(prev, fresh, "accumulate_mask");
  return prev.cwiseProduct(fresh);
}

/// Zeros W wherever the mask is 0. Biases and Adam moments are left alone.
inline void apply_mask(LayerState& layer, const Matrix& mask) {
  require_same_shape(layer.weights, mask, "apply_mask");
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask.data()[i] == 0.0) layer.weights.data()[i] = 0.0;
  }
}

inline std::size_t count_zeros(const Matrix& m) {
  return static_cast<std::size_t>((m.array() == 0.0).count());
}

struct PerturbEvent {
  std::size_t epoch = 0;
  std::vector<std::size_t> pruned_per_layer;  // nonzero weights zeroed by this event
  std::vector<double> layer_zero_fraction;    // per-layer cumulative mask zero fraction
  double cumulative_zero_fraction = 0.0;      // over all in-scope layers
};

using PerturbEventLog = std::vector<PerturbEvent>;

/// Percent of mask entries equal to 0 across all layers (biases excluded).
inline double mask_sparsity(const Network& net) {
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (const auto& l : net) {
    zeros += count_zeros(l.mask);
    total += static_cast<std::size_t>(l.mask.size());
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(zeros) / static_cast<double>(total);
}

/// Percent of weight entries equal to 0.0 across all layers.
inline double weight_sparsity(const Network& net) {
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (const auto& l : net) {
    zeros += count_zeros(l.weights);
    total += static_cast<std::size_t>(l.weights.size());
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(zeros) / static_cast<double>(total);
}

/// Percent of zeros over a set of 0/1 masks.
inline double sparsity(const std::vector<Matrix>& masks) {
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (const auto& m : masks) {
    zeros += count_zeros(m);
    total += static_cast<std::size_t>(m.size());
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(zeros) / static_cast<double>(total);
}

/// One prune event over every layer of `net` (encoder and decoder alike).
inline PerturbEvent perturb_event(Network& net, const PerturbConfig& cfg, std::size_t epoch) {
  PerturbEvent ev;
  ev.epoch = epoch;
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (auto& layer : net) {
    const Matrix fresh = threshold_mask(layer.weights, cfg.tau);
    layer.mask = cfg.cumulative ? accumulate_mask(layer.mask, fresh) : fresh;
    const std::size_t before = count_zeros(layer.weights);
    apply_mask(layer, layer.mask);
    ev.pruned_per_layer.push_back(count_zeros(layer.weights) - before);
    const std::size_t z = count_zeros(layer.mask);
    ev.layer_zero_fraction.push_back(static_cast<double>(z) /
                                     static_cast<double>(layer.mask.size()));
    zeros += z;
    total += static_cast<std::size_t>(layer.mask.size());
  }
  ev.cumulative_zero_fraction =
      total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
  return ev;
}

/// True iff perturbation is on and `epoch` (1-based) is a multiple of the
/// interval.
inline bool schedule_should_perturb(std::size_t epoch, const PerturbConfig& cfg,
                                    std::size_t total_epochs) {
  if (!cfg.enabled || epoch == 0 || epoch > total_epochs || cfg.interval_epochs == 0) return false;
  return epoch % cfg.interval_epochs == 0;
}

inline std::size_t scheduled_event_count(const PerturbConfig& cfg, std::size_t total_epochs) {
  std::size_t n = 0;
  for (std::size_t e = 1; e <= total_epochs; ++e) n += schedule_should_perturb(e, cfg, total_epochs);
  return n;
}

/// CSV: epoch,layer_index,pruned_this_event,cumulative_zero_fraction
inline void write_event_log_csv(std::ostream& os, const PerturbEventLog& log) {
  os << "epoch,layer_index,pruned_this_event,cumulative_zero_fraction\n";
  for (const auto& ev : log) {
    for (std::size_t l = 0; l < ev.pruned_per_layer.size(); ++l) {
      os << ev.epoch << ',' << l << ',' << ev.pruned_per_layer[l] << ','
         << format_real(ev.layer_zero_fraction[l]) << '\n';
    }
  }
}

}  // namespace ptrb

#endif  // PTRB_PERTURBATION_HPP
