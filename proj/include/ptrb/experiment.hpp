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


#ifndef PTRB_EXPERIMENT_HPP
#define PTRB_EXPERIMENT_HPP

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptrb/core.hpp"
#include "ptrb/data.hpp"
#include "ptrb/evaluation.hpp"
#include "ptrb/model_store.hpp"
#include "ptrb/models.hpp"
#include "ptrb/perturbation.hpp"

namespace ptrb {

/// Everything one invocation of the runner needs. Keys of the flat config
/// file match the field names.
struct ExperimentConfig {
  std::string manifest;
  std::vector<std::string> datasets;  // empty: every manifest entry
  std::vector<ModelKind> models{ModelKind::basic_dnn, ModelKind::basic_dae, ModelKind::stacked_dae};
  std::vector<Case> cases{Case::baseline, Case::lowest_loss, Case::at_perturbation,
                          Case::after_perturbation, Case::dropout_only};
  double tau = 5.0;
  std::size_t interval_epochs = 30;
  bool cumulative = true;
  bool perturb_with_dropout = false;
  std::size_t epochs_pretrain = 100;
  std::size_t epochs_finetune = 100;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double dropout_rate = 0.2;
  double reg_lambda = 1e-4;
  std::vector<Eigen::Index> hidden{256, 128, 64};
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::string output_dir = "results";
  std::string baseline_scores;
  std::size_t long_run_epochs = 1000;
  std::vector<double> sweep_taus{0, 5, 10, 15, 20, 25};
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) {
    const auto t = std::string(trim(cur));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const std::string t(trim(value));
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + value + "'");
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}


inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}
}  // namespace detail

/// Key table shared by the config-file parser, the CLI flag layer and the
/// provenance dump in results.json.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::parse_number;
  static const std::vector<ConfigKey> keys = {
      {"manifest", "dataset manifest CSV (name,path,label_column,task)",
       [](auto& c, const auto& v) { c.manifest = v; }, [](const auto& c) { return c.manifest; }},
      {"datasets", "comma list of manifest names to run (default: all)",
       [](auto& c, const auto& v) { c.datasets = detail::split_list(v); },
       [](const auto& c) {
         return detail::join<std::string>(c.datasets, [](const std::string& s) { return s; });
       }},
      {"models", "comma list of basic_dnn,basic_dae,stacked_dae",
       [](auto& c, const auto& v) {
         c.models.clear();
         for (const auto& m : detail::split_list(v)) c.models.push_back(parse_model_kind(m));
         if (c.models.empty()) throw ConfigError("models: empty list");
       },
       [](const auto& c) {
         return detail::join<ModelKind>(c.models, [](const ModelKind& k) { return std::string(to_string(k)); });
       }},
      {"cases", "comma list of experimental cases",
       [](auto& c, const auto& v) {
         c.cases.clear();
         for (const auto& m : detail::split_list(v)) c.cases.push_back(parse_case(m));
         if (c.cases.empty()) throw ConfigError("cases: empty list");
       },
       [](const auto& c) {
         return detail::join<Case>(c.cases, [](const Case& k) { return std::string(to_string(k)); });
       }},
      {"tau", "perturbation threshold, percent of layer min/max",
       [](auto& c, const auto& v) { c.tau = parse_number<double>("tau", v); },
       [](const auto& c) { return format_real(c.tau); }},
      {"interval_epochs", "epochs between perturbation events (> 10)",
       [](auto& c, const auto& v) { c.interval_epochs = parse_number<std::size_t>("interval_epochs", v); },
       [](const auto& c) { return std::to_string(c.interval_epochs); }},
      {"cumulative", "accumulate prune masks across events (true/false)",
       [](auto& c, const auto& v) { c.cumulative = detail::parse_bool("cumulative", v); },
       [](const auto& c) { return std::string(c.cumulative ? "true" : "false"); }},
      {"perturb_with_dropout", "also apply dropout_rate in the perturbation cases (true/false)",
       [](auto& c, const auto& v) { c.perturb_with_dropout = detail::parse_bool("perturb_with_dropout", v); },
       [](const auto& c) { return std::string(c.perturb_with_dropout ? "true" : "false"); }},
      {"epochs_pretrain", "self-supervised pretraining epochs",
       [](auto& c, const auto& v) { c.epochs_pretrain = parse_number<std::size_t>("epochs_pretrain", v); },
       [](const auto& c) { return std::to_string(c.epochs_pretrain); }},
      {"epochs_finetune", "supervised finetuning epochs (basic_dnn trains for epochs_pretrain)",
       [](auto& c, const auto& v) { c.epochs_finetune = parse_number<std::size_t>("epochs_finetune", v); },
       [](const auto& c) { return std::to_string(c.epochs_finetune); }},
      {"batch_size", "minibatch size",
       [](auto& c, const auto& v) { c.batch_size = parse_number<std::size_t>("batch_size", v); },
       [](const auto& c) { return std::to_string(c.batch_size); }},
      {"learning_rate", "Adam learning rate",
       [](auto& c, const auto& v) { c.learning_rate = parse_number<double>("learning_rate", v); },
       [](const auto& c) { return format_real(c.learning_rate); }},
      {"dropout_rate", "dropout rate of the dropout_only case",
       [](auto& c, const auto& v) { c.dropout_rate = parse_number<double>("dropout_rate", v); },
       [](const auto& c) { return format_real(c.dropout_rate); }},
      {"reg_lambda", "penalty weight of the l1_only / l2_only cases",
       [](auto& c, const auto& v) { c.reg_lambda = parse_number<double>("reg_lambda", v); },
       [](const auto& c) { return format_real(c.reg_lambda); }},
      {"hidden", "comma list of hidden layer widths",
       [](auto& c, const auto& v) {
         c.hidden.clear();
         for (const auto& h : detail::split_list(v)) c.hidden.push_back(parse_number<Eigen::Index>("hidden", h));
         if (c.hidden.empty()) throw ConfigError("hidden: empty list");
       },
       [](const auto& c) {
         return detail::join<Eigen::Index>(c.hidden, [](const Eigen::Index& h) { return std::to_string(h); });
       }},
      {"folds", "cross-validation folds",
       [](auto& c, const auto& v) { c.folds = parse_number<std::size_t>("folds", v); },
       [](const auto& c) { return std::to_string(c.folds); }},
      {"seed", "base random seed; fold f uses seed + f",
       [](auto& c, const auto& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
       [](const auto& c) { return std::to_string(c.seed); }},
      {"output_dir", "directory for results (env PTRB_OUTPUT_DIR overrides)",
       [](auto& c, const auto& v) { c.output_dir = v; }, [](const auto& c) { return c.output_dir; }},
      {"baseline_scores", "CSV of external reference scores: dataset,f1_mean,f1_std (percent)",
       [](auto& c, const auto& v) { c.baseline_scores = v; },
       [](const auto& c) { return c.baseline_scores; }},
      {"long_run_epochs", "pretraining epochs of the long-run trend experiment",
       [](auto& c, const auto& v) { c.long_run_epochs = parse_number<std::size_t>("long_run_epochs", v); },
       [](const auto& c) { return std::to_string(c.long_run_epochs); }},
      {"sweep_taus", "comma list of tau values for sweep-tau",
       [](auto& c, const auto& v) {
         c.sweep_taus.clear();
         for (const auto& t : detail::split_list(v)) c.sweep_taus.push_back(parse_number<double>("sweep_taus", t));
       },
       [](const auto& c) {
         return detail::join<double>(c.sweep_taus, [](const double& t) { return format_real(t); });
       }},
  };
  return keys;
}

inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Flat `key = value` text; '#' starts a comment line.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& in, const std::string& source) {
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(cfg, std::string(detail::trim(t.substr(0, eq))),
                     std::string(detail::trim(t.substr(eq + 1))));
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  ExperimentConfig cfg;
  apply_config_text(cfg, in, path.string());
  // A relative manifest is taken relative to the config file.
  if (!cfg.manifest.empty() && std::filesystem::path(cfg.manifest).is_relative()) {
    cfg.manifest = (path.parent_path() / cfg.manifest).lexically_normal().string();
  }
  return cfg;
}

inline nlohmann::ordered_json config_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& k : config_keys()) j[k.name] = k.get(cfg);
  return j;
}

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("manifest is required");
  if (cfg.folds < 2) throw ConfigError("folds must be >= 2");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0,1)");
  if (cfg.reg_lambda < 0.0) throw ConfigError("reg_lambda must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  PerturbConfig p{true, cfg.tau, cfg.interval_epochs, cfg.cumulative};
  p.validate();
  for (double t : cfg.sweep_taus) {
    if (!(t >= 0.0 && t < 50.0)) throw ConfigError("sweep_taus entries must lie in [0, 50)");
  }
  for (auto h : cfg.hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  }
}

/// Pretraining regimes. One run per regime serves every case it backs.
enum class Regime { plain, perturb, dropout, l1, l2 };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::plain: return "plain";
    case Regime::perturb: return "perturb";
    case Regime::dropout: return "dropout";
    case Regime::l1: return "l1";
    case Regime::l2: return "l2";
  }
  return "?";
}

inline Regime regime_of(Case c) {
  switch (c) {
    case Case::baseline: return Regime::plain;
    case Case::lowest_loss:
    case Case::at_perturbation:
    case Case::after_perturbation: return Regime::perturb;
    case Case::dropout_only: return Regime::dropout;
    case Case::l1_only: return Regime::l1;
    case Case::l2_only: return Regime::l2;
  }
  return Regime::plain;
}

/// Training settings of one regime. Only the regime's own knob differs from
/// the plain run.
inline TrainConfig regime_config(const ExperimentConfig& cfg, Regime r, std::uint64_t seed,
                                 std::optional<double> tau_override = std::nullopt,
                                 std::optional<std::size_t> epochs_override = std::nullopt) {
  TrainConfig t;
  t.epochs_pretrain = epochs_override.value_or(cfg.epochs_pretrain);
  t.epochs_finetune = cfg.epochs_finetune;
  t.batch_size = cfg.batch_size;
  t.adam.learning_rate = cfg.learning_rate;
  t.seed = seed;
  switch (r) {
    case Regime::plain: break;
    case Regime::perturb:
      t.perturb = PerturbConfig{true, tau_override.value_or(cfg.tau), cfg.interval_epochs, cfg.cumulative};
      if (cfg.perturb_with_dropout) t.dropout_rate = cfg.dropout_rate;
      break;
    case Regime::dropout: t.dropout_rate = cfg.dropout_rate; break;
    case Regime::l1: t.reg = RegConfig{Penalty::l1, cfg.reg_lambda}; break;
    case Regime::l2: t.reg = RegConfig{Penalty::l2, cfg.reg_lambda}; break;
  }
  return t;
}

/// Seed streams of one fold. Fold f of a run with base seed s uses s + f.
struct FoldSeeds {
  std::uint64_t base;
  std::uint64_t init() const { return derive_seed(base, 11); }
  std::uint64_t pretrain() const { return derive_seed(base, 21); }
  std::uint64_t finetune() const { return derive_seed(base, 31); }
  std::uint64_t supervised() const { return derive_seed(base, 41); }
};

/// Pretraining outcome of one regime on one fold, for any model kind.
struct RegimeRun {
  std::vector<TrainingRecord> records;  // one per stage (stacked: three)
  ModelKind kind = ModelKind::basic_dae;

  Snapshot checkpoint(Case c) const {
    if (kind == ModelKind::stacked_dae) return select_checkpoint(StackedRecord{records}, c);
    return select_checkpoint(records.at(0), c);
  }
  /// Perturbation events merged over stages (stacked: per-stage logs kept
  /// in order, each stage's zero fraction reported separately).
  PerturbEventLog events() const {
    PerturbEventLog out;
    for (const auto& r : records) out.insert(out.end(), r.events.begin(), r.events.end());
    return out;
  }
};

/// Pretrains (autoencoders) or trains (basic_dnn) one regime on one fold.
inline RegimeRun run_regime(ModelKind kind, const ExperimentConfig& cfg, Regime regime,
                            const Matrix& x_train, const std::vector<int>& y_train, int num_classes,
                            const FoldSeeds& seeds, std::optional<double> tau_override = std::nullopt,
                            std::optional<std::size_t> epochs_override = std::nullopt) {
  ModelSpec spec{kind, x_train.cols(), cfg.hidden, num_classes};
  Rng init_rng(seeds.init());
  Model model = build_model(spec, init_rng);
  RegimeRun out;
  out.kind = kind;
  switch (kind) {
    case ModelKind::basic_dnn: {
      TrainConfig t = regime_config(cfg, regime, seeds.supervised(), tau_override);
      auto res = train_classifier(std::move(model.parts[0]), x_train, y_train, num_classes,
                                  epochs_override.value_or(cfg.epochs_pretrain), t, t.dropout_rate,
                                  t.perturb, t.reg, seeds.supervised());
      out.records.push_back(std::move(res.record));
      break;
    }
    case ModelKind::basic_dae: {
      TrainConfig t = regime_config(cfg, regime, seeds.pretrain(), tau_override, epochs_override);
      out.records.push_back(pretrain(model.parts[0], model.encoder_layers, x_train, t));
      break;
    }
    case ModelKind::stacked_dae: {
      TrainConfig t = regime_config(cfg, regime, seeds.pretrain(), tau_override, epochs_override);
      out.records = pretrain_stacked(model, x_train, t).stages;
      break;
    }
  }
  return out;
}

/// Finetunes (autoencoders) or directly evaluates (basic_dnn) one case's
/// checkpoint and scores it on the test fold.
struct CaseOutcome {
  double f1 = 0.0;
  double sparsity = 0.0;  // percent, mask based, over the pretrained model
  Snapshot pretrained;
  std::vector<double> finetune_losses;
};

inline CaseOutcome evaluate_case(const RegimeRun& run, Case c, const ExperimentConfig& cfg,
                                 const Matrix& x_train, const std::vector<int>& y_train,
                                 const Matrix& x_test, const std::vector<int>& y_test,
                                 int num_classes, const FoldSeeds& seeds) {
  CaseOutcome out;
  out.pretrained = run.checkpoint(c);
  out.sparsity = mask_sparsity(out.pretrained.layers);
  ClassifierModel clf;
  if (run.kind == ModelKind::basic_dnn) {
    clf = ClassifierModel{out.pretrained.layers, num_classes};
    out.finetune_losses = run.records.at(0).losses;
  } else {
    TrainConfig t = regime_config(cfg, Regime::plain, seeds.finetune());
    auto res = finetune(out.pretrained, x_train, y_train, num_classes, t);
    clf = std::move(res.model);
    out.finetune_losses = std::move(res.record.losses);
  }
  out.f1 = task_f1(y_test, predict(clf, x_test).labels, num_classes);
  return out;
}

struct ResultRow {
  std::string dataset;
  ModelKind model = ModelKind::basic_dae;
  Case c = Case::baseline;
  std::vector<double> per_fold_f1;
  std::vector<double> per_fold_sparsity;
  double wall_time_s = 0.0;
};

struct DatasetFailure {
  std::string dataset;
  std::string message;
  int exit_code = 1;
};

struct ExternalScore {
  double mean = 0.0;
  double stddev = 0.0;
};

/// dataset,f1_mean,f1_std on the percent scale.
inline std::map<std::string, ExternalScore> load_external_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open baseline scores " + path.string());
  std::map<std::string, ExternalScore> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cells = detail::split_line(t, ',');
    if (cells.size() != 3) throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected 3 cells");
    if (cells[0] == "dataset") continue;
    const auto m = detail::parse_double(cells[1]);
    const auto s = detail::parse_double(cells[2]);
    if (!m || !s) throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": non-numeric score");
    out[cells[0]] = ExternalScore{*m, *s};
  }
  return out;
}

/// Exit code for a library error family.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ModelFileError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("PTRB_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

inline void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto probe = dir / ".ptrb_write_probe";
  std::ofstream out(probe);
  if (ec || !out) throw ConfigError("output directory " + dir.string() + " is not writable");
  out.close();
  std::filesystem::remove(probe, ec);
}

struct LoadedDataset {
  ManifestEntry entry;
  TabularDataset data;
};

inline std::vector<ManifestEntry> selected_entries(const ExperimentConfig& cfg) {
  auto entries = load_manifest(cfg.manifest);
  if (cfg.datasets.empty()) return entries;
  std::vector<ManifestEntry> out;
  for (const auto& name : cfg.datasets) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.name == name; });
    if (it == entries.end()) throw ConfigError("dataset '" + name + "' is not in the manifest");
    out.push_back(*it);
  }
  return out;
}

inline TabularDataset load_entry(const ManifestEntry& e) {
  TabularDataset d = load_dataset(e.name, e.path, e.label_column);
  const bool multiclass = d.num_classes() > 2;
  if (multiclass != (e.task == "multiclass")) {
    throw DataError(e.name + ": manifest says " + e.task + " but the data has " +
                    std::to_string(d.num_classes()) + " classes");
  }
  return d;
}

/// Standardized train/test matrices of one fold. Statistics come from the
/// training rows only.
struct FoldData {
  Matrix x_train, x_test;
  std::vector<int> y_train, y_test;
};

inline FoldData make_fold(const TabularDataset& d, const FoldSplit& split, std::size_t fold) {
  const auto train = split.train_indices(fold);
  const auto& test = split.test[fold];
  const StandardizerStats stats = fit_standardizer(d.x, train);
  return FoldData{apply_standardizer(stats, gather_rows(d.x, train)),
                  apply_standardizer(stats, gather_rows(d.x, test)), gather(d.y, train), gather(d.y, test)};
}

struct ExperimentOutcome {
  std::vector<ResultRow> rows;
  std::vector<DatasetFailure> failures;
  std::map<std::string, std::filesystem::path> saved_models;
  std::map<std::string, double> saved_sparsity;
  std::string summary;
  int exit_code = 0;
};

namespace detail {

inline std::string csv_loss_curves(const std::vector<std::vector<double>>& per_fold) {
  std::ostringstream os;
  write_loss_curve_csv(os, LossCurves{per_fold});
  return os.str();
}

inline std::string csv_loss_band(const std::vector<std::vector<double>>& per_fold) {
  std::ostringstream os;
  write_loss_band_csv(os, LossCurves{per_fold});
  return os.str();
}

inline std::string csv_sparsity(const std::vector<PerturbEventLog>& per_fold) {
  std::ostringstream os;
  write_sparsity_curve_csv(os, per_fold);
  return os.str();
}

inline std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' ');
}

}  // namespace detail

/// Cross-validated protocol over every selected dataset, model and case.
///
/// Per fold the training rows are standardized, each needed regime is
/// pretrained once (all perturbation cases share a single record), every
/// case's checkpoint is finetuned and scored on the test fold. Writes
/// results.json, timings.json, loss/sparsity CSVs, the best pretrained model
/// per dataset and summary.txt under the output directory.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const PerturbConfig schedule{true, cfg.tau, cfg.interval_epochs, cfg.cumulative};
  if (std::find(cfg.cases.begin(), cfg.cases.end(), Case::at_perturbation) != cfg.cases.end() &&
      scheduled_event_count(schedule, cfg.epochs_pretrain) < 2) {
    throw ConfigError("case at_perturbation needs two perturbation events: epochs_pretrain must be >= " +
                      std::to_string(2 * cfg.interval_epochs));
  }
  const auto out_dir = resolve_output_dir(cfg);
  prepare_output_dir(out_dir);
  std::map<std::string, ExternalScore> external;
  if (!cfg.baseline_scores.empty()) external = load_external_scores(cfg.baseline_scores);

  ExperimentOutcome outcome;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  nlohmann::ordered_json timings = nlohmann::ordered_json::array();
  std::ostringstream summary;

  std::vector<Regime> regimes;
  for (Case c : cfg.cases) {
    if (std::find(regimes.begin(), regimes.end(), regime_of(c)) == regimes.end()) {
      regimes.push_back(regime_of(c));
    }
  }

  for (const auto& entry : selected_entries(cfg)) {
    const auto ds_dir = out_dir / entry.name;
    try {
      const TabularDataset data = load_entry(entry);
      const int classes = data.num_classes();
      const FoldSplit split = stratified_kfold(data.y, cfg.folds, cfg.seed);
      log << "[" << entry.name << "] " << data.x.rows() << " x " << data.x.cols() << ", " << classes
          << " classes\n";

      std::vector<ResultRow> rows;
      std::map<std::pair<ModelKind, Case>, std::size_t> row_of;
      for (ModelKind m : cfg.models) {
        for (Case c : cfg.cases) {
          row_of[{m, c}] = rows.size();
          rows.push_back(ResultRow{entry.name, m, c, {}, {}, 0.0});
        }
      }
      // Best fold per row, for saving the best pretrained model.
      std::map<std::size_t, std::pair<double, Snapshot>> best_fold;
      std::map<std::string, std::vector<std::vector<double>>> loss_curves;
      std::map<std::string, std::vector<PerturbEventLog>> sparsity_curves;

      for (std::size_t f = 0; f < cfg.folds; ++f) {
        const FoldData fold = make_fold(data, split, f);
        const FoldSeeds seeds{cfg.seed + f};
        for (ModelKind m : cfg.models) {
          for (Regime r : regimes) {
            const auto t0 = std::chrono::steady_clock::now();
            const RegimeRun run = run_regime(m, cfg, r, fold.x_train, fold.y_train, classes, seeds);
            const double regime_time =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const std::string tag = std::string(to_string(m)) + "_" + std::string(to_string(r));
            for (std::size_t s = 0; s < run.records.size(); ++s) {
              const std::string key =
                  run.records.size() > 1 ? tag + "_stage" + std::to_string(s + 1) : tag;
              loss_curves[key].push_back(run.records[s].losses);
              if (run.records[s].perturbed) sparsity_curves[key].push_back(run.records[s].events);
            }
            std::vector<Case> cases_here;
            for (Case c : cfg.cases) {
              if (regime_of(c) == r) cases_here.push_back(c);
            }
            for (Case c : cases_here) {
              const auto t1 = std::chrono::steady_clock::now();
              CaseOutcome co = evaluate_case(run, c, cfg, fold.x_train, fold.y_train, fold.x_test,
                                             fold.y_test, classes, seeds);
              const double case_time =
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
              const std::size_t ri = row_of[{m, c}];
              rows[ri].per_fold_f1.push_back(co.f1);
              rows[ri].per_fold_sparsity.push_back(co.sparsity);
              rows[ri].wall_time_s += case_time + regime_time / static_cast<double>(cases_here.size());
              if (m != ModelKind::basic_dnn) {
                loss_curves[std::string(to_string(m)) + "_" + std::string(to_string(c)) + "_finetune"]
                    .push_back(co.finetune_losses);
              }
              auto it = best_fold.find(ri);
              if (it == best_fold.end() || co.f1 > it->second.first) {
                best_fold[ri] = {co.f1, std::move(co.pretrained)};
              }
              log << "  fold " << f << " " << to_string(m) << " " << to_string(c)
                  << " F1=" << detail::fixed(co.f1) << " pruned=" << detail::fixed(co.sparsity, 2) << "%\n";
            }
          }
        }
      }

      for (const auto& [key, curves] : loss_curves) {
        write_text(ds_dir / "curves" / (key + "_loss.csv"), detail::csv_loss_curves(curves));
        write_text(ds_dir / "curves" / (key + "_loss_band.csv"), detail::csv_loss_band(curves));
      }
      for (const auto& [key, curves] : sparsity_curves) {
        write_text(ds_dir / "curves" / (key + "_sparsity.csv"), detail::csv_sparsity(curves));
        for (std::size_t f = 0; f < curves.size(); ++f) {
          std::ostringstream os;
          write_event_log_csv(os, curves[f]);
          write_text(ds_dir / "curves" / (key + "_events_fold" + std::to_string(f) + ".csv"), os.str());
        }
      }

      // Best pretrained model: highest mean F1 among autoencoder rows,
      // perturbation cases first.
      std::optional<std::size_t> best_row;
      for (int pass = 0; pass < 2 && !best_row; ++pass) {
        double best_mean = -1.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (rows[i].model == ModelKind::basic_dnn) continue;
          if (pass == 0 && regime_of(rows[i].c) != Regime::perturb) continue;
          const double mean = aggregate_folds(rows[i].per_fold_f1).mean;
          if (mean > best_mean) {
            best_mean = mean;
            best_row = i;
          }
        }
      }
      std::optional<double> saved_sparsity;
      std::string saved_path;
      if (best_row) {
        StoredModel sm{rows[*best_row].model, classes == 2 ? TaskType::binary : TaskType::multiclass,
                       cfg.seed, best_fold.at(*best_row).second};
        const auto path = ds_dir / "best_pretrained.ptrb";
        save_model(sm, path);
        saved_sparsity = sm.sparsity();
        saved_path = path.string();
        outcome.saved_models[entry.name] = path;
        outcome.saved_sparsity[entry.name] = *saved_sparsity;
      }

      // Table-2-shaped summary.
      summary << entry.name << " (" << data.x.rows() << " x " << data.x.cols() << ")\n";
      summary << detail::pad("case", 20);
      for (ModelKind m : cfg.models) summary << detail::pad(std::string(to_string(m)), 16);
      if (!external.empty()) summary << "external";
      summary << "\n";
      for (Case c : cfg.cases) {
        summary << detail::pad(std::string(to_string(c)), 20);
        for (ModelKind m : cfg.models) {
          summary << detail::pad(aggregate_folds(rows[row_of[{m, c}]].per_fold_f1).table_cell(), 16);
        }
        if (auto it = external.find(entry.name); it != external.end() && c == cfg.cases.front()) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.2f (%.2f)", it->second.mean, it->second.stddev);
          summary << buf;
        }
        summary << "\n";
      }
      if (best_row && regime_of(rows[*best_row].c) == Regime::perturb) {
        const auto& r = rows[*best_row];
        char buf[256];
        std::snprintf(buf, sizeof buf, "%% of weights pruned: %.2f (saved %s/%s model)\n", *saved_sparsity,
                      std::string(to_string(r.model)).c_str(), std::string(to_string(r.c)).c_str());
        summary << buf;
      }
      summary << "\n";

      for (const auto& r : rows) {
        const FoldScores s = aggregate_folds(r.per_fold_f1);
        const FoldScores sp = aggregate_folds(r.per_fold_sparsity);
        nlohmann::ordered_json j;
        j["dataset"] = r.dataset;
        j["model"] = std::string(to_string(r.model));
        j["case"] = std::string(to_string(r.c));
        j["tau"] = cfg.tau;
        j["interval"] = cfg.interval_epochs;
        j["seed"] = cfg.seed;
        j["per_fold_f1"] = r.per_fold_f1;
        j["mean_f1"] = s.mean;
        j["std_f1"] = s.stddev;
        j["per_fold_sparsity"] = r.per_fold_sparsity;
        j["sparsity_at_best"] = sp.mean;
        j["sparsity_std"] = sp.stddev;
        if (best_row && &r == &rows[*best_row]) {
          j["saved_model"] = saved_path;
          j["saved_model_sparsity"] = *saved_sparsity;
        }
        results.push_back(j);
        timings.push_back({{"dataset", r.dataset},
                           {"model", std::string(to_string(r.model))},
                           {"case", std::string(to_string(r.c))},
                           {"wall_time_s", r.wall_time_s}});
        outcome.rows.push_back(r);
      }
    } catch (const Error& e) {
      const int code = exit_code_for(e);
      if (code == 2) throw;
      log << "[" << entry.name << "] failed: " << e.what() << "\n";
      outcome.failures.push_back(DatasetFailure{entry.name, e.what(), code});
      if (outcome.exit_code == 0) outcome.exit_code = code;
    }
  }

  nlohmann::ordered_json doc;
  doc["config"] = config_json(cfg);
  doc["f1_average"] = {{"binary", "positive class 1 after label encoding"}, {"multiclass", "macro"}};
  doc["results"] = results;
  nlohmann::ordered_json fails = nlohmann::ordered_json::array();
  for (const auto& f : outcome.failures) fails.push_back({{"dataset", f.dataset}, {"error", f.message}});
  doc["failures"] = fails;
  write_text(out_dir / "results.json", doc.dump(2) + "\n");
  write_text(out_dir / "timings.json", timings.dump(2) + "\n");
  outcome.summary = summary.str();
  write_text(out_dir / "summary.txt", outcome.summary);
  return outcome;
}

struct SweepRow {
  double tau = 0.0;
  FoldScores pruned_pct;
  FoldScores first_event_pct;
  FoldScores f1;
};

struct SweepOutcome {
  std::map<std::string, std::vector<SweepRow>> per_dataset;
  std::map<std::string, FoldScores> baseline_f1;  // perturbation off, lowest-loss checkpoint
  int exit_code = 0;
};

/// Tau ablation: final cumulative pruned percent and lowest-loss F1 per tau.
/// Uses the first autoencoder kind listed in `models` (basic_dae if none).
inline SweepOutcome sweep_tau(const ExperimentConfig& cfg, const std::vector<double>& taus, std::ostream& log) {
  validate(cfg);
  if (taus.empty()) throw ConfigError("sweep-tau: empty tau list");
  for (double t : taus) {
    if (!(t >= 0.0 && t < 50.0)) throw ConfigError("sweep-tau: tau must lie in [0, 50)");
  }
  const auto out_dir = resolve_output_dir(cfg);
  prepare_output_dir(out_dir);
  ModelKind kind = ModelKind::basic_dae;
  for (ModelKind m : cfg.models) {
    if (m != ModelKind::basic_dnn) {
      kind = m;
      break;
    }
  }

  SweepOutcome outcome;
  nlohmann::ordered_json doc;
  doc["config"] = config_json(cfg);
  doc["model"] = std::string(to_string(kind));
  nlohmann::ordered_json ds_json = nlohmann::ordered_json::object();
  for (const auto& entry : selected_entries(cfg)) {
    try {
      const TabularDataset data = load_entry(entry);
      const int classes = data.num_classes();
      const FoldSplit split = stratified_kfold(data.y, cfg.folds, cfg.seed);
      std::vector<std::vector<double>> pruned(taus.size()), first(taus.size()), f1(taus.size());
      std::vector<double> base_f1;
      for (std::size_t f = 0; f < cfg.folds; ++f) {
        const FoldData fold = make_fold(data, split, f);
        const FoldSeeds seeds{cfg.seed + f};
        const RegimeRun base = run_regime(kind, cfg, Regime::plain, fold.x_train, fold.y_train, classes, seeds);
        base_f1.push_back(evaluate_case(base, Case::lowest_loss, cfg, fold.x_train, fold.y_train,
                                        fold.x_test, fold.y_test, classes, seeds).f1);
        for (std::size_t ti = 0; ti < taus.size(); ++ti) {
          const RegimeRun run = run_regime(kind, cfg, Regime::perturb, fold.x_train, fold.y_train,
                                           classes, seeds, taus[ti]);
          const CaseOutcome co = evaluate_case(run, Case::lowest_loss, cfg, fold.x_train, fold.y_train,
                                               fold.x_test, fold.y_test, classes, seeds);
          // Final cumulative pruned percent over every pretrained weight.
          Network all;
          for (const auto& rec : run.records) {
            const auto& fin = rec.checkpoints.at(std::string(kFinalCheckpoint)).layers;
            all.insert(all.end(), fin.begin(), fin.end());
          }
          pruned[ti].push_back(mask_sparsity(all));
          const auto& ev = run.records.at(0).events;
          first[ti].push_back(ev.empty() ? 0.0 : 100.0 * ev.front().cumulative_zero_fraction);
          f1[ti].push_back(co.f1);
          log << "  [" << entry.name << "] fold " << f << " tau=" << format_real(taus[ti])
              << " pruned=" << detail::fixed(pruned[ti].back(), 2) << "% F1=" << detail::fixed(co.f1) << "\n";
        }
      }
      std::ostringstream csv;
      csv << "tau,pruned_pct_mean,pruned_pct_std,f1_mean,f1_std,first_event_pct_mean,first_event_pct_std\n";
      nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
      for (std::size_t ti = 0; ti < taus.size(); ++ti) {
        SweepRow row{taus[ti], aggregate_folds(pruned[ti]), aggregate_folds(first[ti]), aggregate_folds(f1[ti])};
        csv << format_real(row.tau) << ',' << format_real(row.pruned_pct.mean) << ','
            << format_real(row.pruned_pct.stddev) << ',' << format_real(row.f1.mean) << ','
            << format_real(row.f1.stddev) << ',' << format_real(row.first_event_pct.mean) << ','
            << format_real(row.first_event_pct.stddev) << '\n';
        rows_json.push_back({{"tau", row.tau}, {"per_fold_pruned_pct", pruned[ti]}, {"per_fold_f1", f1[ti]}});
        outcome.per_dataset[entry.name].push_back(row);
      }
      outcome.baseline_f1[entry.name] = aggregate_folds(base_f1);
      write_text(out_dir / entry.name / "sweep_tau.csv", csv.str());
      ds_json[entry.name] = {{"baseline_per_fold_f1", base_f1}, {"rows", rows_json}};
    } catch (const Error& e) {
      const int code = exit_code_for(e);
      if (code == 2) throw;
      log << "[" << entry.name << "] failed: " << e.what() << "\n";
      if (outcome.exit_code == 0) outcome.exit_code = code;
    }
  }
  doc["datasets"] = ds_json;
  write_text(out_dir / "sweep_tau.json", doc.dump(2) + "\n");
  return outcome;
}

struct LongRunOutcome {
  // dataset -> fold -> cumulative pruned percent per event
  std::map<std::string, std::vector<PerturbEventLog>> curves;
  int exit_code = 0;
};

/// Extended pretraining with perturbation to trace cumulative pruning.
inline LongRunOutcome long_run_trend(const ExperimentConfig& cfg, std::size_t total_epochs, std::ostream& log) {
  validate(cfg);
  const auto out_dir = resolve_output_dir(cfg);
  prepare_output_dir(out_dir);
  LongRunOutcome outcome;
  for (const auto& entry : selected_entries(cfg)) {
    try {
      const TabularDataset data = load_entry(entry);
      const FoldSplit split = stratified_kfold(data.y, cfg.folds, cfg.seed);
      std::vector<PerturbEventLog> per_fold;
      for (std::size_t f = 0; f < cfg.folds; ++f) {
        const FoldData fold = make_fold(data, split, f);
        const RegimeRun run = run_regime(ModelKind::basic_dae, cfg, Regime::perturb, fold.x_train,
                                         fold.y_train, data.num_classes(), FoldSeeds{cfg.seed + f},
                                         std::nullopt, total_epochs);
        per_fold.push_back(run.records.at(0).events);
        log << "  [" << entry.name << "] fold " << f << ": " << per_fold.back().size() << " events, final "
            << format_real(per_fold.back().empty() ? 0.0 : 100.0 * per_fold.back().back().cumulative_zero_fraction)
            << "% pruned\n";
      }
      write_text(out_dir / entry.name / "long_run_sparsity.csv", detail::csv_sparsity(per_fold));
      outcome.curves[entry.name] = std::move(per_fold);
    } catch (const Error& e) {
      const int code = exit_code_for(e);
      if (code == 2) throw;
      log << "[" << entry.name << "] failed: " << e.what() << "\n";
      if (outcome.exit_code == 0) outcome.exit_code = code;
    }
  }
  return outcome;
}

/// Human-readable header and per-layer summary of a model file.
inline std::string describe_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFileError("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const StoredModel m = decode_model(bytes);
  std::vector<LayerEncoding> enc;
  encode_model(m, EncodingPolicy::automatic, &enc);
  std::ostringstream os;
  os << "file:           " << path.string() << " (" << bytes.size() << " bytes)\n"
     << "schema version: " << int(kModelSchemaVersion) << "\n"
     << "model kind:     " << to_string(m.kind) << "\n"
     << "task:           " << to_string(m.task) << "\n"
     << "seed:           " << m.seed << "\n"
     << "layers:         " << m.snapshot.layers.size() << " (encoder " << m.snapshot.encoder_layers << ")\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", m.sparsity());
  os << "sparsity:       " << buf << "% of weights pruned\n";
  for (std::size_t i = 0; i < m.snapshot.layers.size(); ++i) {
    const auto& l = m.snapshot.layers[i];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * static_cast<double>(count_zeros(l.mask)) /
                                               static_cast<double>(l.mask.size()));
    os << "  layer " << i << ": " << l.out_dim() << " x " << l.in_dim() << " " << to_string(l.activation)
       << ", " << (enc[i] == LayerEncoding::sparse ? "sparse" : "dense") << ", mask zeros " << buf << "%\n";
  }
  return os.str();
}

}  // namespace ptrb

#endif  // PTRB_EXPERIMENT_HPP
