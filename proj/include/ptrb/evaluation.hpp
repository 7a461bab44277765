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


#ifndef PTRB_EVALUATION_HPP
#define PTRB_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "ptrb/core.hpp"
#include "ptrb/perturbation.hpp"

namespace ptrb {

enum class F1Average { binary_pos1, macro };

/// confusion[t][p] counts samples of true class t predicted as p.
struct ConfusionCounts {
  std::vector<std::vector<std::size_t>> matrix;

  std::size_t tp(int c) const { return matrix[c][c]; }
  std::size_t fp(int c) const {
    std::size_t s = 0;
    for (std::size_t t = 0; t < matrix.size(); ++t) {
      if (static_cast<int>(t) != c) s += matrix[t][c];
    }
    return s;
  }
  std::size_t fn(int c) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < matrix.size(); ++p) {
      if (static_cast<int>(p) != c) s += matrix[c][p];
    }
    return s;
  }
  std::size_t total() const {
    std::size_t s = 0;
    for (const auto& r : matrix) {
      for (auto v : r) s += v;
    }
    return s;
  }
};

inline ConfusionCounts confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                                 int num_classes) {
  if (y_true.size() != y_pred.size()) {
    throw DimensionError("confusion: " + std::to_string(y_true.size()) + " labels vs " +
                         std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionCounts c{std::vector<std::vector<std::size_t>>(
      static_cast<std::size_t>(num_classes), std::vector<std::size_t>(num_classes, 0))};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= num_classes || y_pred[i] < 0 || y_pred[i] >= num_classes) {
      throw DataError("confusion: label out of range at index " + std::to_string(i));
    }
    c.matrix[y_true[i]][y_pred[i]] += 1;
  }
  return c;
}

/// F1 of one class; 0 when precision + recall is 0 (or undefined).
inline double class_f1(const ConfusionCounts& c, int cls) {
  const double tp = static_cast<double>(c.tp(cls));
  const double fp = static_cast<double>(c.fp(cls));
  const double fn = static_cast<double>(c.fn(cls));
  const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline double f1_score(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                       F1Average average, int num_classes = 2) {
  if (average == F1Average::binary_pos1) {
    return class_f1(confusion(y_true, y_pred, std::max(num_classes, 2)), 1);
  }
  const ConfusionCounts c = confusion(y_true, y_pred, num_classes);
  double sum = 0.0;
  for (int k = 0; k < num_classes; ++k) sum += class_f1(c, k);
  return sum / num_classes;
}

/// Positive-class F1 for binary tasks, macro F1 otherwise.
inline double task_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                      int num_classes) {
  return f1_score(y_true, y_pred, num_classes == 2 ? F1Average::binary_pos1 : F1Average::macro,
                  num_classes);
}

struct FoldScores {
  std::vector<double> per_fold;
  double mean = 0.0;
  double stddev = 0.0;  // population

  /// "mean (std)" on the percent scale with two decimals.
  std::string table_cell() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f (%.2f)", 100.0 * mean, 100.0 * stddev);
    return buf;
  }
};

inline FoldScores aggregate_folds(const std::vector<double>& values) {
  if (values.empty()) throw Error("aggregate_folds: no folds");
  FoldScores s;
  s.per_fold = values;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return s;
}

/// Loss per epoch for every fold of one training regime.
struct LossCurves {
  std::vector<std::vector<double>> per_fold;
};

/// CSV: epoch,fold,loss
inline void write_loss_curve_csv(std::ostream& os, const LossCurves& curves) {
  os << "epoch,fold,loss\n";
  for (std::size_t f = 0; f < curves.per_fold.size(); ++f) {
    for (std::size_t e = 0; e < curves.per_fold[f].size(); ++e) {
      os << e + 1 << ',' << f << ',' << format_real(curves.per_fold[f][e]) << '\n';
    }
  }
}

/// CSV: epoch,mean,std (cross-fold band over the epochs every fold reached).
inline void write_loss_band_csv(std::ostream& os, const LossCurves& curves) {
  os << "epoch,mean,std\n";
  if (curves.per_fold.empty()) return;
  std::size_t epochs = curves.per_fold.front().size();
  for (const auto& c : curves.per_fold) epochs = std::min(epochs, c.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<double> col;
    for (const auto& c : curves.per_fold) col.push_back(c[e]);
    const FoldScores s = aggregate_folds(col);
    os << e + 1 << ',' << format_real(s.mean) << ',' << format_real(s.stddev) << '\n';
  }
}

/// CSV: event_epoch,fold,cumulative_pruned_pct
inline void write_sparsity_curve_csv(std::ostream& os, const std::vector<PerturbEventLog>& per_fold) {
  os << "event_epoch,fold,cumulative_pruned_pct\n";
  for (std::size_t f = 0; f < per_fold.size(); ++f) {
    for (const auto& ev : per_fold[f]) {
      os << ev.epoch << ',' << f << ',' << format_real(100.0 * ev.cumulative_zero_fraction) << '\n';
    }
  }
}

}  // namespace ptrb

#endif  // PTRB_EVALUATION_HPP
