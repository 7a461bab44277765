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


// ptrb: command line front end for the experiment runner.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "ptrb/experiment.hpp"

namespace {

struct Overrides {
  std::string config_file;
  std::map<std::string, std::string> values;
};

void add_config_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("-c,--config", ov.config_file, "flat key = value config file");
  for (const auto& key : ptrb::config_keys()) {
    cmd->add_option_function<std::string>(
        "--" + key.name, [&ov, name = key.name](const std::string& v) { ov.values[name] = v; }, key.help);
  }
}

ptrb::ExperimentConfig resolve(const Overrides& ov) {
  ptrb::ExperimentConfig cfg = ov.config_file.empty() ? ptrb::ExperimentConfig{} : ptrb::load_config(ov.config_file);
  for (const auto& [k, v] : ov.values) ptrb::set_config_value(cfg, k, v);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight perturbation pretraining experiments"};
  app.require_subcommand(1);

  Overrides run_ov, sweep_ov, long_ov;
  auto* run = app.add_subcommand("run", "cross-validated case x model protocol");
  add_config_flags(run, run_ov);

  auto* sweep = app.add_subcommand("sweep-tau", "pruned percent and F1 across tau values");
  add_config_flags(sweep, sweep_ov);

  auto* long_run = app.add_subcommand("long-run", "extended pretraining pruning trend");
  add_config_flags(long_run, long_ov);

  std::string model_path;
  auto* inspect = app.add_subcommand("inspect-model", "print header and sparsity of a model file");
  inspect->add_option("path", model_path, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const auto out = ptrb::run_experiment(resolve(run_ov), std::cerr);
      std::cout << out.summary;
      for (const auto& f : out.failures) std::cerr << "dataset " << f.dataset << " failed: " << f.message << "\n";
      return out.exit_code;
    }
    if (*sweep) {
      const auto cfg = resolve(sweep_ov);
      const auto out = ptrb::sweep_tau(cfg, cfg.sweep_taus, std::cerr);
      for (const auto& [name, rows] : out.per_dataset) {
        std::cout << name << "\ntau  pruned%  F1%\n";
        for (const auto& r : rows) {
          std::cout << ptrb::format_real(r.tau) << "  " << ptrb::format_real(r.pruned_pct.mean) << "  "
                    << r.f1.table_cell() << "\n";
        }
      }
      return out.exit_code;
    }
    if (*long_run) {
      const auto cfg = resolve(long_ov);
      const auto out = ptrb::long_run_trend(cfg, cfg.long_run_epochs, std::cerr);
      for (const auto& [name, folds] : out.curves) {
        std::cout << name << ": " << (folds.empty() ? 0 : folds.front().size()) << " events per fold\n";
      }
      return out.exit_code;
    }
    if (*inspect) {
      std::cout << ptrb::describe_model(model_path);
      return 0;
    }
  } catch (const ptrb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ptrb::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
