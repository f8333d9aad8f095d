/*
 * Copyright 2026 The IHA Audit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command line front end: iha {init-config, train, hessian, audit, evaluate,
// dynamics verify, run-all}. Results go to stdout as JSON; failures print
// {"error": ..., "message": ...} to stderr and exit with status 1.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "iha/experiment.h"
#include "iha/io.h"
#include "iha/status.h"
#include "json.hpp"

namespace {

using Json = nlohmann::ordered_json;

int Fail(const absl::Status& status) {
  Json j;
  const std::optional<iha::ErrorCode> code = iha::GetErrorCode(status);
  j["error"] = code.has_value()
                   ? std::string(iha::ErrorCodeName(*code))
                   : absl::StatusCodeToString(status.code());
  j["message"] = std::string(status.message());
  std::cerr << j.dump() << std::endl;
  return 1;
}

int Succeed(const Json& j) {
  std::cout << j.dump(2) << std::endl;
  return 0;
}

absl::StatusOr<iha::ExperimentConfig> ConfigFrom(const std::string& path) {
  if (path.empty()) {
    iha::ExperimentConfig cfg = iha::DefaultSyntheticConfig();
    if (const char* dir = std::getenv("IHA_OUTPUT_DIR");
        dir != nullptr && *dir != '\0') {
      cfg.output_dir = dir;
    }
    return cfg;
  }
  return iha::LoadExperimentConfig(path);
}

Json SummaryJson(const iha::EvaluateReport& report) {
  return Json::parse(report.metrics_json);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference auditing with inverse-Hessian attacks"};
  app.require_subcommand(1);

  std::string config_path;

  auto* init = app.add_subcommand("init-config",
                                  "Print the default synthetic config");
  std::string init_out;
  init->add_option("--out", init_out, "Write to this file instead of stdout");

  auto* train = app.add_subcommand("train", "Train the game's models");
  train->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();

  auto* hessian = app.add_subcommand(
      "hessian", "Precompute member-set Hessian eigendecompositions");
  hessian->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  std::vector<int> hessian_targets;
  hessian->add_option("--target", hessian_targets,
                      "Target model indices (default: config targets)");

  auto* audit = app.add_subcommand("audit", "Score one attack on one target");
  audit->add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  std::string attack_id;
  int target = 0;
  audit->add_option("--attack", attack_id, "Attack id from the config")
      ->required();
  audit->add_option("--target", target, "Target model index");

  auto* evaluate = app.add_subcommand(
      "evaluate", "Compute metrics, ROC and agreement files");
  evaluate->add_option("--config", config_path, "Experiment config (JSON)");
  std::vector<std::string> table_paths;
  std::string eval_out = "eval";
  double eval_q = 0.05;
  evaluate->add_option("--tables", table_paths,
                       "Score table CSVs (instead of --config)");
  evaluate->add_option("--out", eval_out, "Output directory with --tables");
  evaluate->add_option("--q", eval_q, "Agreement FPR with --tables");

  auto* dynamics = app.add_subcommand("dynamics", "SGD dynamics tools");
  dynamics->require_subcommand(1);
  auto* verify = dynamics->add_subcommand(
      "verify", "Check noise, fluctuation and posterior predictions");
  iha::DynamicsVerifyOptions dyn;
  verify->add_option("--seed", dyn.seed, "Random seed");
  verify->add_option("--records", dyn.records, "Regression records");
  verify->add_option("--batch-size", dyn.batch_size, "Minibatch size");
  verify->add_option("--trials", dyn.noise_trials, "Noise covariance batches");
  verify->add_option("--samples", dyn.trajectory_samples,
                     "Stationary samples per setting");
  verify->add_option("--thin", dyn.thin, "Steps between samples");
  verify->add_option("--burn-in", dyn.burn_in, "Steps before sampling");
  verify->add_option("--pairs", dyn.posterior_pairs, "Log-posterior pairs");

  auto* run_all = app.add_subcommand(
      "run-all", "train, hessian, audit and evaluate in one go");
  run_all->add_option("--config", config_path,
                      "Experiment config (default: built-in synthetic demo)");

  CLI11_PARSE(app, argc, argv);

  if (*init) {
    const std::string text =
        iha::ExperimentConfigToJson(iha::DefaultSyntheticConfig());
    if (init_out.empty()) {
      std::cout << text;
      return 0;
    }
    const absl::Status s = iha::WriteFileAtomic(init_out, text);
    return s.ok() ? 0 : Fail(s);
  }

  if (*verify) {
    absl::StatusOr<std::string> report = iha::RunDynamicsVerification(dyn);
    if (!report.ok()) return Fail(report.status());
    std::cout << *report;
    return Json::parse(*report)["pass"].get<bool>() ? 0 : 3;
  }

  if (*evaluate && !table_paths.empty()) {
    std::vector<std::filesystem::path> paths(table_paths.begin(),
                                             table_paths.end());
    std::string hash;
    absl::StatusOr<std::vector<iha::ScoreTable>> tables =
        iha::LoadScoreTables(paths, &hash);
    if (!tables.ok()) return Fail(tables.status());
    absl::StatusOr<iha::EvaluateReport> report =
        iha::EvaluateTables(*tables, hash, eval_q, eval_out);
    if (!report.ok()) return Fail(report.status());
    return Succeed(SummaryJson(*report));
  }
  if (*evaluate && config_path.empty()) {
    return Fail(absl::InvalidArgumentError(
        "evaluate needs --config or --tables"));
  }

  absl::StatusOr<iha::ExperimentConfig> cfg = ConfigFrom(config_path);
  if (!cfg.ok()) return Fail(cfg.status());

  if (*train) {
    absl::StatusOr<iha::TrainReport> report = iha::CmdTrain(*cfg);
    if (!report.ok()) return Fail(report.status());
    return Succeed({{"config_hash", cfg->Hash()},
                    {"num_models", cfg->num_models},
                    {"trained", report->trained}});
  }
  if (*hessian) {
    std::vector<int> targets = hessian_targets;
    if (targets.empty()) targets = cfg->targets;
    if (targets.empty()) targets = {0};
    const absl::Status s = iha::CmdHessian(*cfg, targets);
    if (!s.ok()) return Fail(s);
    return Succeed({{"config_hash", cfg->Hash()}, {"targets", targets}});
  }
  if (*audit) {
    absl::StatusOr<iha::ScoreTable> table =
        iha::CmdAudit(*cfg, attack_id, target);
    if (!table.ok()) return Fail(table.status());
    return Succeed(
        {{"config_hash", cfg->Hash()},
         {"attack", table->attack_id},
         {"target", target},
         {"rows", table->rows.size()},
         {"members", table->MemberCount()},
         {"file", iha::ScoreTablePath(*cfg, attack_id, target).string()}});
  }
  if (*evaluate) {
    absl::StatusOr<iha::EvaluateReport> report = iha::CmdEvaluate(*cfg);
    if (!report.ok()) return Fail(report.status());
    return Succeed(SummaryJson(*report));
  }
  if (*run_all) {
    absl::StatusOr<iha::EvaluateReport> report = iha::RunAll(*cfg);
    if (!report.ok()) return Fail(report.status());
    return Succeed(SummaryJson(*report));
  }
  return 0;
}
