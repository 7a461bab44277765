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

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "ptrb/experiment.hpp"
#include "ptrb_test_support.hpp"

namespace ptrb {
namespace {

const std::filesystem::path kToyManifest = std::filesystem::path(PTRB_SOURCE_DIR) / "data/toy/manifest.csv";

ExperimentConfig toy_config(const std::string& out) {
  ExperimentConfig c;
  c.manifest = kToyManifest.string();
  c.datasets = {"toy_binary"};
  c.hidden = {8, 4, 3};
  c.epochs_pretrain = 65;
  c.epochs_finetune = 15;
  c.folds = 3;
  c.seed = 4;
  c.output_dir = testing::scratch_dir(out).string();
  return c;
}

const ResultRow& row(const ExperimentOutcome& o, ModelKind m, Case c) {
  for (const auto& r : o.rows) {
    if (r.model == m && r.c == c) return r;
  }
  throw std::runtime_error("row not found");
}

TEST(Config, ParsesFlatKeyValueText) {
  ExperimentConfig c;
  std::istringstream in(
      "# comment\nmanifest = m.csv\nmodels = basic_dae, stacked_dae\ncases=baseline,lowest_loss\n"
      "tau = 12.5\ninterval_epochs = 40\ncumulative = false\nhidden = 32,16\nseed = 9\n"
      "sweep_taus = 0,10\n\n");
  apply_config_text(c, in, "cfg");
  EXPECT_EQ(c.manifest, "m.csv");
  EXPECT_EQ(c.models, (std::vector<ModelKind>{ModelKind::basic_dae, ModelKind::stacked_dae}));
  EXPECT_EQ(c.cases, (std::vector<Case>{Case::baseline, Case::lowest_loss}));
  EXPECT_EQ(c.tau, 12.5);
  EXPECT_EQ(c.interval_epochs, 40u);
  EXPECT_FALSE(c.cumulative);
  EXPECT_EQ(c.hidden, (std::vector<Eigen::Index>{32, 16}));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.sweep_taus, (std::vector<double>{0, 10}));
}

TEST(Config, Defaults) {
  const ExperimentConfig c;
  EXPECT_EQ(c.tau, 5.0);
  EXPECT_EQ(c.interval_epochs, 30u);
  EXPECT_EQ(c.epochs_pretrain, 100u);
  EXPECT_EQ(c.epochs_finetune, 100u);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_EQ(c.hidden, (std::vector<Eigen::Index>{256, 128, 64}));
  EXPECT_EQ(c.folds, 5u);
  EXPECT_EQ(c.cases.size(), 5u);
  EXPECT_TRUE(c.cumulative);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  ExperimentConfig c;
  EXPECT_THROW(set_config_value(c, "learning_rat", "0.1"), ConfigError);
  EXPECT_THROW(set_config_value(c, "tau", "five"), ConfigError);
  EXPECT_THROW(set_config_value(c, "cases", "baseline,best"), ConfigError);
  EXPECT_THROW(set_config_value(c, "cumulative", "maybe"), ConfigError);
  EXPECT_THROW(set_config_value(c, "folds", "-3"), ConfigError);
  std::istringstream in("tau 5\n");
  EXPECT_THROW(apply_config_text(c, in, "cfg"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/ptrb.conf"), ConfigError);
}

TEST(Config, ValidateChecksRanges) {
  ExperimentConfig c;
  EXPECT_THROW(validate(c), ConfigError);  // no manifest
  c.manifest = "m.csv";
  EXPECT_NO_THROW(validate(c));
  c.tau = 50;
  EXPECT_THROW(validate(c), ConfigError);
  c.tau = 5;
  c.interval_epochs = 10;
  EXPECT_THROW(validate(c), ConfigError);
  c.interval_epochs = 30;
  c.folds = 1;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, EveryKeyRoundTripsThroughJson) {
  ExperimentConfig c;
  c.manifest = "x.csv";
  c.datasets = {"a", "b"};
  ExperimentConfig back;
  const auto j = config_json(c);
  for (const auto& [k, v] : j.items()) set_config_value(back, k, v.get<std::string>());
  EXPECT_EQ(config_json(back), config_json(c));
}

TEST(Regimes, CaseMapping) {
  EXPECT_EQ(regime_of(Case::baseline), Regime::plain);
  EXPECT_EQ(regime_of(Case::lowest_loss), Regime::perturb);
  EXPECT_EQ(regime_of(Case::at_perturbation), Regime::perturb);
  EXPECT_EQ(regime_of(Case::after_perturbation), Regime::perturb);
  EXPECT_EQ(regime_of(Case::dropout_only), Regime::dropout);
  EXPECT_EQ(regime_of(Case::l1_only), Regime::l1);
  EXPECT_EQ(regime_of(Case::l2_only), Regime::l2);
  ExperimentConfig c;
  const TrainConfig d = regime_config(c, Regime::dropout, 1);
  EXPECT_EQ(d.dropout_rate, 0.2);
  EXPECT_FALSE(d.perturb.enabled);
  const TrainConfig p = regime_config(c, Regime::perturb, 1);
  EXPECT_TRUE(p.perturb.enabled);
  EXPECT_EQ(p.dropout_rate, 0.0);
  set_config_value(c, "perturb_with_dropout", "true");
  const TrainConfig joint = regime_config(c, Regime::perturb, 1);
  EXPECT_TRUE(joint.perturb.enabled);
  EXPECT_EQ(joint.dropout_rate, 0.2);
  EXPECT_EQ(regime_config(c, Regime::plain, 1).dropout_rate, 0.0);
}

TEST(ExitCodes, ByErrorFamily) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), 2);
  EXPECT_EQ(exit_code_for(DataError("x")), 3);
  EXPECT_EQ(exit_code_for(TruncatedError("x")), 3);
  EXPECT_EQ(exit_code_for(NumericError("x")), 4);
}

TEST(RunExperiment, FullProtocolOnToyData) {
  ExperimentConfig c = toy_config("run_full");
  std::ostringstream log;
  const ExperimentOutcome o = run_experiment(c, log);
  EXPECT_EQ(o.exit_code, 0) << log.str();
  ASSERT_EQ(o.rows.size(), 15u);
  for (const auto& r : o.rows) {
    ASSERT_EQ(r.per_fold_f1.size(), 3u);
    for (double f : r.per_fold_f1) {
      EXPECT_GE(f, 0.0);
      EXPECT_LE(f, 1.0);
    }
  }
  // Perturbation cases share one record: at/after pruned, baseline not.
  const auto& at = row(o, ModelKind::basic_dae, Case::at_perturbation);
  const auto& base = row(o, ModelKind::basic_dae, Case::baseline);
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_GT(at.per_fold_sparsity[f], 0.0);
    EXPECT_EQ(base.per_fold_sparsity[f], 0.0);
  }
  const auto out = std::filesystem::path(c.output_dir);
  EXPECT_TRUE(std::filesystem::exists(out / "results.json"));
  EXPECT_TRUE(std::filesystem::exists(out / "timings.json"));
  EXPECT_TRUE(std::filesystem::exists(out / "toy_binary/best_pretrained.ptrb"));
  EXPECT_TRUE(std::filesystem::exists(out / "toy_binary/curves/basic_dae_perturb_loss.csv"));
  EXPECT_TRUE(std::filesystem::exists(out / "toy_binary/curves/basic_dae_perturb_sparsity.csv"));
  const auto sparsity_csv = testing::read_file(out / "toy_binary/curves/basic_dae_perturb_sparsity.csv");
  EXPECT_EQ(std::count(sparsity_csv.begin(), sparsity_csv.end(), '\n'), 1 + 3 * 2);  // two events x three folds

  const auto doc = nlohmann::json::parse(testing::read_file(out / "results.json"));
  EXPECT_EQ(doc["config"]["tau"], "5");
  EXPECT_EQ(doc["results"].size(), 15u);
  EXPECT_TRUE(doc["failures"].empty());

  // Summary's pruned percent is the saved model's sparsity.
  const StoredModel saved = load_model(o.saved_models.at("toy_binary"));
  EXPECT_EQ(saved.sparsity(), o.saved_sparsity.at("toy_binary"));
  if (o.summary.find("% of weights pruned") != std::string::npos) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", saved.sparsity());
    EXPECT_NE(o.summary.find(std::string("% of weights pruned: ") + buf), std::string::npos) << o.summary;
  }
}

TEST(RunExperiment, ByteIdenticalResultsAcrossRuns) {
  ExperimentConfig c = toy_config("det_a");
  c.models = {ModelKind::basic_dae, ModelKind::stacked_dae};
  run_experiment(c, std::cerr);
  const std::string dir_a = c.output_dir;
  const auto a = testing::read_file(std::filesystem::path(c.output_dir) / "results.json");
  const auto a_curve = testing::read_file(std::filesystem::path(c.output_dir) / "toy_binary/curves/basic_dae_perturb_sparsity.csv");
  c.output_dir = testing::scratch_dir("det_b").string();
  run_experiment(c, std::cerr);
  std::string b = testing::read_file(std::filesystem::path(c.output_dir) / "results.json");
  // The resolved config names the output directory and saved model path.
  const std::string dir_b = c.output_dir;
  for (auto pos = b.find(dir_b); pos != std::string::npos; pos = b.find(dir_b, pos)) b.replace(pos, dir_b.size(), dir_a);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a_curve, testing::read_file(std::filesystem::path(c.output_dir) / "toy_binary/curves/basic_dae_perturb_sparsity.csv"));
}

TEST(RunExperiment, CaseIsolation) {
  ExperimentConfig c = toy_config("iso_a");
  c.models = {ModelKind::basic_dae};
  c.cases = {Case::lowest_loss};
  const auto alone = run_experiment(c, std::cerr);
  c.cases = {Case::after_perturbation, Case::lowest_loss, Case::dropout_only};
  c.output_dir = testing::scratch_dir("iso_b").string();
  const auto together = run_experiment(c, std::cerr);
  EXPECT_EQ(row(alone, ModelKind::basic_dae, Case::lowest_loss).per_fold_f1,
            row(together, ModelKind::basic_dae, Case::lowest_loss).per_fold_f1);
  EXPECT_EQ(row(alone, ModelKind::basic_dae, Case::lowest_loss).per_fold_sparsity,
            row(together, ModelKind::basic_dae, Case::lowest_loss).per_fold_sparsity);
}

TEST(RunExperiment, TauZeroMatchesUnperturbedPipeline) {
  ExperimentConfig c = toy_config("tau0_a");
  c.tau = 0.0;
  c.cases = {Case::after_perturbation};
  const auto perturbed = run_experiment(c, std::cerr);
  c.cases = {Case::baseline};
  c.output_dir = testing::scratch_dir("tau0_b").string();
  const auto plain = run_experiment(c, std::cerr);
  for (ModelKind m : c.models) {
    EXPECT_EQ(row(perturbed, m, Case::after_perturbation).per_fold_f1, row(plain, m, Case::baseline).per_fold_f1);
    EXPECT_EQ(row(perturbed, m, Case::after_perturbation).per_fold_sparsity,
              row(plain, m, Case::baseline).per_fold_sparsity);
  }
}

TEST(RunExperiment, BaselineOnlyHasNoSparsityLine) {
  ExperimentConfig c = toy_config("baseline_only");
  c.cases = {Case::baseline};
  const auto o = run_experiment(c, std::cerr);
  EXPECT_EQ(o.rows.size(), 3u);
  EXPECT_EQ(o.summary.find("pruned"), std::string::npos);
}

TEST(RunExperiment, MulticlassAndPenaltyCases) {
  ExperimentConfig c = toy_config("multi");
  c.datasets = {"toy_multiclass"};
  c.models = {ModelKind::basic_dae};
  c.cases = {Case::l1_only, Case::l2_only};
  c.reg_lambda = 1e-3;
  c.hidden = {16, 8, 4};
  c.epochs_finetune = 60;
  const auto o = run_experiment(c, std::cerr);
  EXPECT_EQ(o.exit_code, 0);
  EXPECT_EQ(o.rows.size(), 2u);
  EXPECT_GT(aggregate_folds(row(o, ModelKind::basic_dae, Case::l2_only).per_fold_f1).mean, 0.5);
}

TEST(RunExperiment, FailingDatasetDoesNotStopOthers) {
  const auto dir = testing::scratch_dir("failing");
  {
    std::ofstream m(dir / "manifest.csv");
    m << "name,path,label_column,task\nbroken,broken.csv,last,binary\ngood,"
      << (kToyManifest.parent_path() / "toy_binary.csv").string() << ",label,binary\n";
    std::ofstream b(dir / "broken.csv");
    b << "a,b,y\n1,2,x\n1,oops,y\n";
  }
  ExperimentConfig c = toy_config("failing_out");
  c.manifest = (dir / "manifest.csv").string();
  c.datasets.clear();
  c.models = {ModelKind::basic_dae};
  c.cases = {Case::baseline};
  const auto o = run_experiment(c, std::cerr);
  EXPECT_EQ(o.exit_code, 3);
  ASSERT_EQ(o.failures.size(), 1u);
  EXPECT_EQ(o.failures[0].dataset, "broken");
  EXPECT_NE(o.failures[0].message.find("row 3"), std::string::npos);
  EXPECT_EQ(o.rows.size(), 1u);
}

TEST(RunExperiment, TaskMismatchIsDataError) {
  const auto dir = testing::scratch_dir("mismatch");
  {
    std::ofstream m(dir / "manifest.csv");
    m << "name,path,label_column,task\nx," << (kToyManifest.parent_path() / "toy_binary.csv").string()
      << ",label,multiclass\n";
  }
  ExperimentConfig c = toy_config("mismatch_out");
  c.manifest = (dir / "manifest.csv").string();
  c.datasets.clear();
  const auto o = run_experiment(c, std::cerr);
  EXPECT_EQ(o.exit_code, 3);
}

TEST(RunExperiment, AtPerturbationNeedsTwoEvents) {
  ExperimentConfig c = toy_config("two_events");
  c.epochs_pretrain = 59;
  EXPECT_THROW(run_experiment(c, std::cerr), ConfigError);
  c.cases = {Case::baseline, Case::lowest_loss, Case::after_perturbation};
  EXPECT_EQ(run_experiment(c, std::cerr).exit_code, 0);
}

TEST(RunExperiment, UnknownDatasetIsConfigError) {
  ExperimentConfig c = toy_config("unknown_ds");
  c.datasets = {"nope"};
  EXPECT_THROW(run_experiment(c, std::cerr), ConfigError);
}

TEST(RunExperiment, OutputDirEnvironmentOverride) {
  const auto env_dir = testing::scratch_dir("env_out");
  ExperimentConfig c = toy_config("env_cfg");
  c.cases = {Case::baseline};
  c.models = {ModelKind::basic_dae};
  ::setenv("PTRB_OUTPUT_DIR", env_dir.c_str(), 1);
  run_experiment(c, std::cerr);
  ::unsetenv("PTRB_OUTPUT_DIR");
  EXPECT_TRUE(std::filesystem::exists(env_dir / "results.json"));
  EXPECT_FALSE(std::filesystem::exists(std::filesystem::path(c.output_dir) / "results.json"));
}

TEST(SweepTau, TauZeroEqualsBaselineAndFirstEventGrows) {
  ExperimentConfig c = toy_config("sweep");
  c.models = {ModelKind::basic_dae};
  const auto o = sweep_tau(c, {0, 5, 10, 15, 20, 25}, std::cerr);
  ASSERT_EQ(o.exit_code, 0);
  const auto& rows = o.per_dataset.at("toy_binary");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].pruned_pct.mean, 0.0);
  EXPECT_EQ(rows[0].f1.per_fold, o.baseline_f1.at("toy_binary").per_fold);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    for (std::size_t f = 0; f < 3; ++f) {
      EXPECT_GE(rows[i].first_event_pct.per_fold[f], rows[i - 1].first_event_pct.per_fold[f]);
    }
  }
  const auto csv = testing::read_file(std::filesystem::path(c.output_dir) / "toy_binary/sweep_tau.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "tau,pruned_pct_mean,pruned_pct_std,f1_mean,f1_std,first_event_pct_mean,first_event_pct_std");
  EXPECT_THROW(sweep_tau(c, {}, std::cerr), ConfigError);
  EXPECT_THROW(sweep_tau(c, {50}, std::cerr), ConfigError);
}

TEST(SweepTau, LargeTauDoesNotCrash) {
  ExperimentConfig c = toy_config("sweep_big");
  c.models = {ModelKind::stacked_dae};
  c.epochs_pretrain = 100;
  const auto o = sweep_tau(c, {49.9}, std::cerr);
  EXPECT_EQ(o.exit_code, 0);
  EXPECT_LT(o.per_dataset.at("toy_binary")[0].pruned_pct.mean, 100.0);
}

TEST(LongRun, ThirtyThreeNonDecreasingEvents) {
  ExperimentConfig c = toy_config("long");
  c.hidden = {6, 3};
  c.folds = 2;
  const auto o = long_run_trend(c, 1000, std::cerr);
  ASSERT_EQ(o.exit_code, 0);
  for (const auto& log : o.curves.at("toy_binary")) {
    ASSERT_EQ(log.size(), 33u);
    for (std::size_t i = 1; i < log.size(); ++i) {
      EXPECT_GE(log[i].cumulative_zero_fraction, log[i - 1].cumulative_zero_fraction);
    }
  }
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(c.output_dir) / "toy_binary/long_run_sparsity.csv"));
}

TEST(DescribeModel, PrintsHeaderAndSparsity) {
  const auto dir = testing::scratch_dir("describe");
  LayerState l = make_layer(4, 2, Activation::relu);
  l.weights.setConstant(1.0);
  l.mask(0, 0) = 0.0;
  l.weights(0, 0) = 0.0;
  save_model(StoredModel{ModelKind::basic_dae, TaskType::binary, 42, Snapshot{{l}, 1, 0}}, dir / "m.ptrb");
  const std::string text = describe_model(dir / "m.ptrb");
  EXPECT_NE(text.find("basic_dae"), std::string::npos);
  EXPECT_NE(text.find("12.5000% of weights pruned"), std::string::npos);
  EXPECT_NE(text.find("sparse"), std::string::npos);
}

}  // namespace
}  // namespace ptrb
