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

// Experiment orchestration: configuration, the train -> hessian -> audit ->
// evaluate pipeline and the dynamics verification report.
//
// Output layout under ExperimentConfig::output_dir:
//   manifest.json
//   models/model_{i}.params, models/model_{i}.mask
//   hessians/model_{i}.eig, hessians/model_{i}.eig.json
//   lattack/target{t}_ref{j}.params, lattack/target{t}_loo{record}_ref{j}.params
//   scores/{attack}_target{t}.csv, scores/{attack}_target{t}.json
//   eval/metrics.json, eval/roc_{attack}_target{t}.csv,
//   eval/agreement_target{t}.csv

#ifndef IHA_EXPERIMENT_H_
#define IHA_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "iha/attacks.h"
#include "iha/data.h"
#include "iha/eval.h"
#include "iha/linalg.h"
#include "iha/model.h"
#include "iha/training.h"

namespace iha {

inline constexpr int kConfigVersion = 1;

enum class DatasetSource { kSynthetic, kCsv, kIdx };

struct DatasetConfig {
  DatasetSource source = DatasetSource::kSynthetic;
  // Synthetic generator.
  std::uint64_t seed = 0;
  std::size_t size = 2000;
  int feature_dim = 30;
  int num_classes = 5;
  double separation = 0.5;
  // CSV.
  std::string csv_path;
  std::string label_column = "label";
  // IDX.
  std::string images_path;
  std::string labels_path;
  bool odd_even = false;
  // Keep only the first `limit` records when nonzero.
  std::size_t limit = 0;
};

enum class AttackKind { kLoss, kSif, kIha, kLira, kLAttack, kLiraL };

struct AttackConfig {
  AttackKind kind = AttackKind::kLoss;
  // Unique key used in file names and metrics; derived when empty.
  std::string id;
  // sif and iha.
  ConditioningPolicy conditioning = ConditioningPolicy::Damped(0.2);
  HessianMode hessian_mode = HessianMode::kExactHessian;
  // iha.
  TermMask term_mask;
  double l0_fraction = 1.0;
  IhaOutputMode output_mode = IhaOutputMode::kRawScore;
  // lira.
  LiraMode lira_mode = LiraMode::kOnline;
  LiraStatistic statistic = LiraStatistic::kLoss;
  // lattack and liral: leave-one-out reference models per record.
  int references = 32;
  // Score at most this many candidates (half members) when nonzero.
  std::size_t max_candidates = 0;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelSpec model = ModelSpec::Mlp(30, {16}, 5, LossKind::kCrossEntropy);
  SgdConfig sgd;
  std::uint64_t seed = 0;
  int num_models = 128;
  double gamma = 0.5;
  std::vector<AttackConfig> attacks;
  // Target models audited by `audit` and `run-all`; empty means model 0.
  std::vector<int> targets;
  HessianOptions hessian_options;
  double agreement_q = 0.05;
  std::string output_dir = "iha_out";
  // 0 selects DefaultThreadCount().
  int threads = 0;

  absl::Status Validate() const;
  // Canonical JSON; output_dir and threads are excluded.
  std::string CanonicalJson() const;
  // Hex FNV-1a of CanonicalJson().
  std::string Hash() const;
  int ThreadCount() const;
  const AttackConfig* FindAttack(absl::string_view id) const;
};

std::string AttackKindName(AttackKind kind);

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text);
// Applies IHA_OUTPUT_DIR and IHA_THREADS overrides.
absl::StatusOr<ExperimentConfig> LoadExperimentConfig(
    const std::filesystem::path& path);
std::string ExperimentConfigToJson(const ExperimentConfig& cfg);

absl::StatusOr<Dataset> LoadExperimentDataset(const ExperimentConfig& cfg);

struct ModelSeeds {
  std::uint64_t mask_seed = 0;
  std::uint64_t train_seed = 0;
};
ModelSeeds SeedsForModel(const ExperimentConfig& cfg, int index);

std::filesystem::path ModelParamsPath(const ExperimentConfig& cfg, int index);
std::filesystem::path ModelMaskPath(const ExperimentConfig& cfg, int index);
std::filesystem::path HessianPath(const ExperimentConfig& cfg, int index);
std::filesystem::path ScoreTablePath(const ExperimentConfig& cfg,
                                     absl::string_view attack_id, int target);

struct TrainReport {
  // Indices trained during this call; the rest were reused.
  std::vector<int> trained;
};
absl::StatusOr<TrainReport> CmdTrain(const ExperimentConfig& cfg);

// Computes and stores the member-set Hessian eigendecomposition of each
// target; an up-to-date file is reused.
absl::Status CmdHessian(const ExperimentConfig& cfg,
                        const std::vector<int>& targets);

absl::StatusOr<ScoreTable> CmdAudit(const ExperimentConfig& cfg,
                                    absl::string_view attack_id, int target);

struct EvaluateReport {
  std::vector<AttackSummary> summaries;
  std::string metrics_json;
};
// Evaluates every score table of `cfg` found under scores/.
absl::StatusOr<EvaluateReport> CmdEvaluate(const ExperimentConfig& cfg);
// Evaluates explicit tables and writes into `out_dir`. All tables must carry
// `config_hash`.
absl::StatusOr<EvaluateReport> EvaluateTables(
    const std::vector<ScoreTable>& tables, absl::string_view config_hash,
    double agreement_q, const std::filesystem::path& out_dir);
absl::StatusOr<std::vector<ScoreTable>> LoadScoreTables(
    const std::vector<std::filesystem::path>& paths, std::string* config_hash);

struct DynamicsVerifyOptions {
  std::uint64_t seed = 0;
  std::size_t records = 20000;
  int batch_size = 200;
  double learning_rate = 0.05;
  std::int64_t noise_trials = 100000;
  std::int64_t trajectory_samples = 100000;
  std::int64_t thin = 20;
  std::int64_t burn_in = 2000;
  int posterior_pairs = 100;
};
// Runs the noise covariance, stationary fluctuation and log-posterior
// checks on a two-parameter linear least-squares problem. Returns a JSON
// report. The defaults take a few minutes.
absl::StatusOr<std::string> RunDynamicsVerification(
    const DynamicsVerifyOptions& options);

// train, hessian (when an attack needs it), audit of every attack on every
// target, then evaluate.
absl::StatusOr<EvaluateReport> RunAll(const ExperimentConfig& cfg);

// Synthetic demo configuration used by `run-all` without a config file.
ExperimentConfig DefaultSyntheticConfig();

}  // namespace iha

#endif  // IHA_EXPERIMENT_H_
