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


#ifndef PTRB_NN_DROPOUT_HPP
#define PTRB_NN_DROPOUT_HPP

#include <string>
#include <vector>

#include "ptrb/core.hpp"

namespace ptrb {

/// Bernoulli keep-mask plus the inverted-dropout scale applied to survivors.
struct DropoutMask {
  Matrix keep;  // entries in {0, 1}
  double scale = 1.0;
};

inline DropoutMask dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  DropoutMask m{Matrix::Ones(rows, cols), 1.0 / (1.0 - rate)};
  if (rate == 0.0) return m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (rng.uniform() < rate) m.keep(i, j) = 0.0;
    }
  }
  return m;
}

/// Which layer outputs receive dropout during training.
struct DropoutPlan {
  double rate = 0.0;
  std::vector<bool> after_layer;

  bool active_after(std::size_t layer) const {
    return rate > 0.0 && layer < after_layer.size() && after_layer[layer];
  }
};

}  // namespace ptrb

#endif  // PTRB_NN_DROPOUT_HPP
