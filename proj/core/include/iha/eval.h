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

// Membership-game evaluation: ROC curves, AUC, TPR at fixed FPR, per-attack
// aggregation over target models and inter-attack agreement.
//
// Conventions: a record is predicted a member iff its score is strictly
// greater than the threshold. The ROC sweeps +inf, every distinct score in
// descending order, then -inf. Ties between a member and a non-member score
// therefore contribute half credit to the AUC.

#ifndef IHA_EVAL_H_
#define IHA_EVAL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "iha/linalg.h"

namespace iha {

struct ScoreRow {
  std::size_t record_index = 0;
  double score = 0.0;
  bool is_member = false;
};

struct ScoreTable {
  std::string attack_id;
  int target_model_id = 0;
  std::vector<ScoreRow> rows;

  std::size_t MemberCount() const;
  // Needs a member, a non-member and finite scores.
  absl::Status Validate() const;
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  std::size_t false_positives = 0;
  std::size_t true_positives = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

absl::StatusOr<RocCurve> ComputeRoc(const ScoreTable& table);

// Trapezoidal area under the curve.
double Auc(const RocCurve& curve);

// The curve point with the largest false-positive count not exceeding
// q * negatives, and among those the highest TPR.
RocPoint OperatingPointAtFpr(const RocCurve& curve, double q);

// TPR at the operating point above (step-function convention).
double TprAtFpr(const RocCurve& curve, double q);

// Linear interpolation of the curve at FPR = q.
double TprAtFprInterpolated(const RocCurve& curve, double q);

// Membership predictions at the operating point for FPR q, in row order.
absl::StatusOr<std::vector<bool>> PredictAtFpr(const ScoreTable& table,
                                               double q);

struct AttackSummary {
  std::string attack_id;
  std::vector<int> target_models;
  std::vector<double> aucs;
  double auc_mean = 0.0;
  // Sample standard deviation; absent with a single target model.
  std::optional<double> auc_std;
  double tpr_at_1pct_mean = 0.0;
  double tpr_at_01pct_mean = 0.0;
};

// Groups tables by attack_id (in order of first appearance) and summarizes
// each group across its target models.
absl::StatusOr<std::vector<AttackSummary>> Aggregate(
    std::span<const ScoreTable> tables);

// Square matrix over {GT, attacks...}. Entry (i, j) with i < j is the
// agreement rate over members, with i > j over non-members; the diagonal
// is 1.
struct AgreementMatrix {
  std::vector<std::string> names;
  Matrix values;
  double q = 0.0;
  // Realized FPR of each attack's predictions (GT excluded).
  std::vector<double> realized_fpr;
};

// `predictions[k]` belongs to `names[k]`; all vectors are over the same
// records as `labels`.
absl::StatusOr<AgreementMatrix> AgreementFromPredictions(
    const std::vector<std::string>& names,
    const std::vector<std::vector<bool>>& predictions,
    const std::vector<bool>& labels);

// Thresholds each table at FPR q and compares predictions record by record.
// Tables must cover the same record indices with the same labels.
absl::StatusOr<AgreementMatrix> ComputeAgreementMatrix(
    std::span<const ScoreTable> tables, double q);

// CSV with header record_index,attack,score,is_member, preceded by a
// comment line "# config_hash=<hex>,target_model=<id>".
std::string ScoreTableToCsv(const ScoreTable& table,
                            absl::string_view config_hash);
absl::StatusOr<ScoreTable> ScoreTableFromCsv(absl::string_view text,
                                             std::string* config_hash = nullptr);

std::string RocToCsv(const RocCurve& curve, absl::string_view config_hash);
std::string AgreementToCsv(const AgreementMatrix& matrix,
                           absl::string_view config_hash);

}  // namespace iha

#endif  // IHA_EVAL_H_
