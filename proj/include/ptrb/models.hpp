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


#ifndef PTRB_MODELS_HPP
#define PTRB_MODELS_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ptrb/core.hpp"
#include "ptrb/nn/adam.hpp"
#include "ptrb/nn/backprop.hpp"
#include "ptrb/nn/dropout.hpp"
#include "ptrb/nn/layer.hpp"
#include "ptrb/nn/loss.hpp"
#include "ptrb/nn/regularization.hpp"
#include "ptrb/perturbation.hpp"

namespace ptrb {

enum class ModelKind : std::uint8_t { basic_dnn = 0, basic_dae = 1, stacked_dae = 2 };
enum class TaskType : std::uint8_t { binary = 0, multiclass = 1 };

/// Pretrained-model variants that get finetuned and compared. The first five
/// are the standard protocol; the two penalty cases pretrain with an L1/L2
/// weight penalty instead of perturbation.
enum class Case : std::uint8_t {
  baseline,
  lowest_loss,
  at_perturbation,
  after_perturbation,
  dropout_only,
  l1_only,
  l2_only,
};

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::basic_dnn: return "basic_dnn";
    case ModelKind::basic_dae: return "basic_dae";
    case ModelKind::stacked_dae: return "stacked_dae";
  }
  return "?";
}

inline std::string_view to_string(TaskType t) {
  return t == TaskType::binary ? "binary" : "multiclass";
}

inline std::string_view to_string(Case c) {
  switch (c) {
    case Case::baseline: return "baseline";
    case Case::lowest_loss: return "lowest_loss";
    case Case::at_perturbation: return "at_perturbation";
    case Case::after_perturbation: return "after_perturbation";
    case Case::dropout_only: return "dropout_only";
    case Case::l1_only: return "l1_only";
    case Case::l2_only: return "l2_only";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (auto k : {ModelKind::basic_dnn, ModelKind::basic_dae, ModelKind::stacked_dae}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown model kind '" + std::string(s) + "'");
}

inline Case parse_case(std::string_view s) {
  for (auto c : {Case::baseline, Case::lowest_loss, Case::at_perturbation, Case::after_perturbation,
                 Case::dropout_only, Case::l1_only, Case::l2_only}) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown case '" + std::string(s) + "'");
}

struct ModelSpec {
  ModelKind kind = ModelKind::basic_dae;
  Eigen::Index input_dim = 0;
  std::vector<Eigen::Index> hidden{256, 128, 64};
  int num_classes = 2;

  TaskType task() const { return num_classes == 2 ? TaskType::binary : TaskType::multiclass; }
};

/// Output units and activation for a classification head.
inline Eigen::Index head_width(int num_classes) { return num_classes == 2 ? 1 : num_classes; }
inline Activation head_activation(int num_classes) {
  return num_classes == 2 ? Activation::sigmoid : Activation::softmax;
}
inline LossKind head_loss(int num_classes) {
  return num_classes == 2 ? LossKind::bce : LossKind::cross_entropy;
}

/// A freshly initialised model. `parts` holds one network for basic_dnn and
/// basic_dae, and three single-hidden-layer autoencoders for stacked_dae.
/// In every autoencoder the first `encoder_layers` layers are the encoder.
struct Model {
  ModelKind kind = ModelKind::basic_dae;
  std::vector<Network> parts;
  std::size_t encoder_layers = 0;
};

inline Model build_model(const ModelSpec& spec, Rng& rng) {
  if (spec.input_dim < 1) throw DimensionError("build_model: input_dim must be >= 1");
  if (spec.hidden.empty()) throw DimensionError("build_model: at least one hidden layer required");
  for (auto h : spec.hidden) {
    if (h < 1) throw DimensionError("build_model: hidden sizes must be >= 1");
  }
  if (spec.num_classes < 2) throw DimensionError("build_model: num_classes must be >= 2");

  Model m;
  m.kind = spec.kind;
  std::vector<Eigen::Index> dims{spec.input_dim};
  dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
  const std::size_t depth = spec.hidden.size();

  switch (spec.kind) {
    case ModelKind::basic_dnn: {
      Network net;
      for (std::size_t i = 0; i < depth; ++i) {
        net.push_back(init_layer(dims[i], dims[i + 1], Activation::relu, rng));
      }
      net.push_back(init_layer(dims.back(), head_width(spec.num_classes),
                               head_activation(spec.num_classes), rng));
      m.parts.push_back(std::move(net));
      m.encoder_layers = depth;
      break;
    }
    case ModelKind::basic_dae: {
      Network net;
      for (std::size_t i = 0; i < depth; ++i) {
        net.push_back(init_layer(dims[i], dims[i + 1], Activation::relu, rng));
      }
      for (std::size_t i = depth; i > 0; --i) {
        const Activation act = i == 1 ? Activation::linear : Activation::relu;
        net.push_back(init_layer(dims[i], dims[i - 1], act, rng));
      }
      m.parts.push_back(std::move(net));
      m.encoder_layers = depth;
      break;
    }
    case ModelKind::stacked_dae: {
      for (std::size_t i = 0; i < depth; ++i) {
        Network ae;
        ae.push_back(init_layer(dims[i], dims[i + 1], Activation::relu, rng));
        ae.push_back(init_layer(dims[i + 1], dims[i], Activation::linear, rng));
        m.parts.push_back(std::move(ae));
      }
      m.encoder_layers = 1;
      break;
    }
  }
  return m;
}

struct TrainConfig {
  std::size_t epochs_pretrain = 100;
  std::size_t epochs_finetune = 100;
  std::size_t batch_size = 64;
  AdamConfig adam{};
  double dropout_rate = 0.0;
  RegConfig reg{};
  PerturbConfig perturb{};
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw ConfigError("dropout_rate must lie in [0, 1)");
    }
    if (reg.lambda < 0.0) throw ConfigError("reg lambda must be >= 0");
    adam.validate();
    if (perturb.enabled) perturb.validate();
  }
};

/// Weights, biases and masks of a network at one point in training.
/// Optimizer moments are not part of a snapshot; training restarts them
/// from zero.
struct Snapshot {
  Network layers;
  std::size_t encoder_layers = 0;
  std::size_t epoch = 0;
};

inline LayerState strip_optimizer(const LayerState& l) {
  LayerState s;
  s.weights = l.weights;
  s.bias = l.bias;
  s.activation = l.activation;
  s.mask = l.mask;
  return s;
}

inline Snapshot take_snapshot(const Network& net, std::size_t encoder_layers, std::size_t epoch) {
  Snapshot s;
  s.layers.reserve(net.size());
  for (const auto& l : net) s.layers.push_back(strip_optimizer(l));
  s.encoder_layers = encoder_layers;
  s.epoch = epoch;
  return s;
}

inline constexpr std::string_view kFinalCheckpoint = "final";
inline constexpr std::string_view kLowestLossCheckpoint = "lowest_loss";
inline constexpr std::string_view kAtPerturbationCheckpoint = "at_perturbation";

struct TrainingRecord {
  std::vector<double> losses;  // losses[e - 1] is the full-set loss after epoch e
  PerturbEventLog events;
  std::map<std::string, Snapshot, std::less<>> checkpoints;
  std::size_t lowest_loss_epoch = 0;
  bool perturbed = false;
  double dropout_rate = 0.0;
  Penalty penalty = Penalty::none;
};

/// Settings for one run of minibatch training.
struct TrainingRun {
  std::size_t epochs = 0;
  std::size_t batch_size = 64;
  AdamConfig adam{};
  DropoutPlan dropout{};
  RegConfig reg{};
  PerturbConfig perturb{};
  std::uint64_t seed = 0;
  std::size_t encoder_layers = 0;  // recorded into snapshots
};

/// Minibatch Adam training of `net` on (input, target), in place.
///
/// Each epoch: reshuffle, step through batches (last partial batch kept),
/// record the evaluation-mode loss over the full set, then fire a
/// perturbation event if one is scheduled. Checkpoints: "final", the
/// earliest epoch with the lowest loss, and the state right after the
/// second perturbation event.
inline TrainingRecord train_network(Network& net, const Matrix& input, const Matrix& target,
                                    LossKind loss_kind, const TrainingRun& run) {
  if (net.empty()) throw Error("train_network: empty network");
  if (input.rows() != target.rows()) {
    throw DimensionError("train_network: input has " + std::to_string(input.rows()) +
                         " rows but target has " + std::to_string(target.rows()));
  }
  if (run.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  check_loss_compatible(loss_kind, net.back().activation);

  TrainingRecord rec;
  rec.perturbed = run.perturb.enabled;
  rec.dropout_rate = run.dropout.rate;
  rec.penalty = run.reg.active() ? run.reg.kind : Penalty::none;

  Rng shuffle_rng(derive_seed(run.seed, 1));
  Rng dropout_rng(derive_seed(run.seed, 2));
  const auto n = static_cast<std::size_t>(input.rows());
  std::vector<std::size_t> order = iota_indices(n);
  double best = std::numeric_limits<double>::infinity();

  rec.checkpoints.insert_or_assign(std::string(kFinalCheckpoint),
                                   take_snapshot(net, run.encoder_layers, 0));

  for (std::size_t epoch = 1; epoch <= run.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += run.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + run.batch_size);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Matrix xb = gather_rows(input, rows);
      const Matrix tb = gather_rows(target, rows);
      const ForwardTrace trace = forward_trace(net, xb, run.dropout, &dropout_rng);
      BackwardResult br = backward(net, trace, tb, loss_kind);
      const double penalty = add_penalty(net, run.reg, br.grads);
      if (!std::isfinite(br.loss + penalty)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      adam_step(net, br.grads, run.adam);
    }

    const double loss = evaluate_loss(net, input, target, loss_kind);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite full-set loss at epoch " + std::to_string(epoch));
    }
    rec.losses.push_back(loss);
    if (loss < best) {
      best = loss;
      rec.lowest_loss_epoch = epoch;
      rec.checkpoints.insert_or_assign(std::string(kLowestLossCheckpoint),
                                       take_snapshot(net, run.encoder_layers, epoch));
    }

    if (schedule_should_perturb(epoch, run.perturb, run.epochs)) {
      rec.events.push_back(perturb_event(net, run.perturb, epoch));
      if (rec.events.size() == 2) {
        rec.checkpoints.insert_or_assign(std::string(kAtPerturbationCheckpoint),
                                         take_snapshot(net, run.encoder_layers, epoch));
      }
    }
  }
  rec.checkpoints.insert_or_assign(std::string(kFinalCheckpoint),
                                   take_snapshot(net, run.encoder_layers, run.epochs));
  return rec;
}

/// Dropout is applied to encoder hidden outputs only.
inline DropoutPlan encoder_dropout(std::size_t layers, std::size_t encoder_layers, double rate) {
  DropoutPlan plan;
  plan.rate = rate;
  plan.after_layer.assign(layers, false);
  for (std::size_t l = 0; l < std::min(layers, encoder_layers); ++l) plan.after_layer[l] = true;
  return plan;
}

/// Self-supervised reconstruction training of an autoencoder. No labels.
inline TrainingRecord pretrain(Network& autoencoder, std::size_t encoder_layers,
                               const Matrix& x_train, const TrainConfig& cfg) {
  cfg.validate();
  if (autoencoder.empty() || autoencoder.back().out_dim() != autoencoder.front().in_dim()) {
    throw DimensionError("pretrain: network is not an autoencoder");
  }
  TrainingRun run;
  run.epochs = cfg.epochs_pretrain;
  run.batch_size = cfg.batch_size;
  run.adam = cfg.adam;
  run.dropout = encoder_dropout(autoencoder.size(), encoder_layers, cfg.dropout_rate);
  run.reg = cfg.reg;
  run.perturb = cfg.perturb;
  run.seed = cfg.seed;
  run.encoder_layers = encoder_layers;
  return train_network(autoencoder, x_train, x_train, LossKind::mse, run);
}

/// Records of the three layer-wise autoencoders of a stacked model.
struct StackedRecord {
  std::vector<TrainingRecord> stages;
};

/// Greedy layer-wise pretraining: stage k trains on the ReLU code of the
/// finished stage k-1.
inline StackedRecord pretrain_stacked(Model& model, const Matrix& x_train, const TrainConfig& cfg) {
  if (model.kind != ModelKind::stacked_dae) throw Error("pretrain_stacked: not a stacked model");
  StackedRecord rec;
  Matrix z = x_train;
  for (std::size_t k = 0; k < model.parts.size(); ++k) {
    TrainConfig stage_cfg = cfg;
    stage_cfg.seed = derive_seed(cfg.seed, 100 + k);
    rec.stages.push_back(pretrain(model.parts[k], 1, z, stage_cfg));
    if (k + 1 < model.parts.size()) z = dense_forward(model.parts[k][0], z);
  }
  return rec;
}

/// Deep copy of the checkpoint backing `c`.
inline Snapshot select_checkpoint(const TrainingRecord& rec, Case c) {
  auto fetch = [&](std::string_view key) -> Snapshot {
    auto it = rec.checkpoints.find(key);
    if (it == rec.checkpoints.end()) {
      throw CheckpointError("checkpoint '" + std::string(key) + "' not recorded for case " +
                            std::string(to_string(c)));
    }
    return it->second;
  };
  auto require = [&](bool ok, const char* why) {
    if (!ok) {
      throw CheckpointError("case " + std::string(to_string(c)) + " unavailable: " + why);
    }
  };
  switch (c) {
    case Case::baseline:
      require(!rec.perturbed && rec.dropout_rate == 0.0 && rec.penalty == Penalty::none,
              "run used perturbation, dropout or a weight penalty");
      return fetch(kFinalCheckpoint);
    case Case::lowest_loss:
      return fetch(kLowestLossCheckpoint);
    case Case::at_perturbation:
      require(rec.perturbed, "perturbation disabled");
      return fetch(kAtPerturbationCheckpoint);
    case Case::after_perturbation:
      require(rec.perturbed, "perturbation disabled");
      return fetch(kFinalCheckpoint);
    case Case::dropout_only:
      require(rec.dropout_rate > 0.0, "dropout disabled");
      return fetch(kFinalCheckpoint);
    case Case::l1_only:
      require(rec.penalty == Penalty::l1, "no L1 penalty");
      return fetch(kFinalCheckpoint);
    case Case::l2_only:
      require(rec.penalty == Penalty::l2, "no L2 penalty");
      return fetch(kFinalCheckpoint);
  }
  throw CheckpointError("unknown case");
}

/// Unrolls the chosen stage checkpoints into one deep autoencoder:
/// enc1, enc2, enc3, dec3, dec2, dec1.
inline Snapshot select_checkpoint(const StackedRecord& rec, Case c) {
  std::vector<Snapshot> parts;
  for (const auto& stage : rec.stages) parts.push_back(select_checkpoint(stage, c));
  Snapshot s;
  for (const auto& p : parts) s.layers.push_back(p.layers.at(0));
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) s.layers.push_back(it->layers.at(1));
  s.encoder_layers = parts.size();
  s.epoch = parts.empty() ? 0 : parts.back().epoch;
  return s;
}

/// Encoder of an autoencoder snapshot.
inline Network encoder_of(const Snapshot& s) {
  return Network(s.layers.begin(),
                 s.layers.begin() + static_cast<std::ptrdiff_t>(s.encoder_layers));
}

struct ClassifierModel {
  Network layers;
  int num_classes = 2;
};

inline Matrix label_targets(const std::vector<int>& y, int num_classes) {
  if (num_classes == 2) {
    Matrix t(static_cast<Eigen::Index>(y.size()), 1);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] != 0 && y[i] != 1) {
        throw DataError("label " + std::to_string(y[i]) + " out of range for a binary task");
      }
      t(static_cast<Eigen::Index>(i), 0) = y[i];
    }
    return t;
  }
  return one_hot(y, num_classes);
}

struct SupervisedResult {
  ClassifierModel model;
  TrainingRecord record;
};

/// Supervised training of a classifier network (basic DNN, or a pretrained
/// encoder plus head). Dropout, when set, hits every hidden layer.
inline SupervisedResult train_classifier(Network net, const Matrix& x_train,
                                         const std::vector<int>& y_train, int num_classes,
                                         std::size_t epochs, const TrainConfig& cfg,
                                         double dropout_rate, const PerturbConfig& perturb,
                                         const RegConfig& reg, std::uint64_t seed) {
  cfg.validate();
  if (static_cast<std::size_t>(x_train.rows()) != y_train.size()) {
    throw DimensionError("train_classifier: feature/label count mismatch");
  }
  TrainingRun run;
  run.epochs = epochs;
  run.batch_size = cfg.batch_size;
  run.adam = cfg.adam;
  run.dropout = encoder_dropout(net.size(), net.size() - 1, dropout_rate);
  run.perturb = perturb;
  run.reg = reg;
  run.seed = seed;
  run.encoder_layers = net.size() - 1;
  const Matrix target = label_targets(y_train, num_classes);
  SupervisedResult out;
  out.record = train_network(net, x_train, target, head_loss(num_classes), run);
  out.model = ClassifierModel{std::move(net), num_classes};
  return out;
}

/// Finetunes a pretrained encoder with a fresh head. Every layer trains and
/// no prune mask is enforced.
inline SupervisedResult finetune(const Snapshot& pretrained, const Matrix& x_train,
                                 const std::vector<int>& y_train, int num_classes,
                                 const TrainConfig& cfg) {
  Network net = encoder_of(pretrained);
  if (net.empty()) throw Error("finetune: snapshot has no encoder layers");
  Rng head_rng(derive_seed(cfg.seed, 7));
  net.push_back(init_layer(net.back().out_dim(), head_width(num_classes),
                           head_activation(num_classes), head_rng));
  return train_classifier(std::move(net), x_train, y_train, num_classes, cfg.epochs_finetune, cfg,
                          0.0, PerturbConfig{}, RegConfig{}, derive_seed(cfg.seed, 8));
}

struct Prediction {
  std::vector<int> labels;
  Matrix scores;
};

/// Binary: label 1 iff score >= 0.5. Multiclass: argmax, lowest index wins ties.
inline Prediction predict(const ClassifierModel& model, const Matrix& x) {
  if (model.layers.empty()) throw Error("predict: empty model");
  if (x.cols() != model.layers.front().in_dim()) {
    throw DimensionError("predict: input has " + std::to_string(x.cols()) +
                         " features, model expects " +
                         std::to_string(model.layers.front().in_dim()));
  }
  Prediction p;
  p.scores = forward(model.layers, x);
  p.labels.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < p.scores.rows(); ++i) {
    if (p.scores.cols() == 1) {
      p.labels[static_cast<std::size_t>(i)] = p.scores(i, 0) >= 0.5 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index j = 1; j < p.scores.cols(); ++j) {
        if (p.scores(i, j) > p.scores(i, best)) best = j;
      }
      p.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
  }
  return p;
}

}  // namespace ptrb

#endif  // PTRB_MODELS_HPP
