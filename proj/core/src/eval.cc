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

#include "iha/eval.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "absl/strings/ascii.h"
#include "absl/strings/match.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "iha/status.h"

namespace iha {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest false-positive count allowed at FPR q.
std::size_t AllowedFalsePositives(std::size_t negatives, double q) {
  const double budget = q * static_cast<double>(negatives) + 1e-9;
  if (budget <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(budget));
}

std::string FormatDouble(double x) { return absl::StrFormat("%.17g", x); }

}  // namespace

std::size_t ScoreTable::MemberCount() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(),
                    [](const ScoreRow& r) { return r.is_member; }));
}

absl::Status ScoreTable::Validate() const {
  const std::size_t members = MemberCount();
  if (members == 0 || members == rows.size()) {
    return MakeError(ErrorCode::kDegenerateLabels,
                     absl::StrFormat("table %s/%d has %d members among %d rows",
                                     attack_id, target_model_id, members,
                                     rows.size()));
  }
  for (const ScoreRow& r : rows) {
    if (!std::isfinite(r.score)) {
      return MakeError(ErrorCode::kNonFiniteInput,
                       absl::StrFormat("record %d has a non-finite score",
                                       r.record_index));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<RocCurve> ComputeRoc(const ScoreTable& table) {
  IHA_RETURN_IF_ERROR(table.Validate());
  std::vector<const ScoreRow*> order;
  order.reserve(table.rows.size());
  for (const ScoreRow& r : table.rows) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const ScoreRow* a, const ScoreRow* b) {
              return a->score > b->score;
            });
  RocCurve curve;
  curve.positives = table.MemberCount();
  curve.negatives = table.rows.size() - curve.positives;
  const double pos = static_cast<double>(curve.positives);
  const double neg = static_cast<double>(curve.negatives);

  auto push = [&](double threshold, std::size_t fp, std::size_t tp) {
    curve.points.push_back({threshold, static_cast<double>(fp) / neg,
                            static_cast<double>(tp) / pos, fp, tp});
  };
  push(kInf, 0, 0);
  std::size_t fp = 0;
  std::size_t tp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double threshold = order[i]->score;
    // Rows strictly above this threshold are already counted.
    push(threshold, fp, tp);
    while (i < order.size() && order[i]->score == threshold) {
      if (order[i]->is_member) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
  }
  push(-kInf, fp, tp);
  return curve;
}

double Auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

RocPoint OperatingPointAtFpr(const RocCurve& curve, double q) {
  const std::size_t allowed = AllowedFalsePositives(curve.negatives, q);
  RocPoint best = curve.points.front();
  // Counts are nondecreasing along the sweep.
  for (const RocPoint& p : curve.points) {
    if (p.false_positives > allowed) break;
    best = p;
  }
  return best;
}

double TprAtFpr(const RocCurve& curve, double q) {
  return OperatingPointAtFpr(curve, q).tpr;
}

double TprAtFprInterpolated(const RocCurve& curve, double q) {
  const std::vector<RocPoint>& pts = curve.points;
  double best = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const RocPoint& a = pts[i - 1];
    const RocPoint& b = pts[i];
    if (b.fpr <= q) {
      best = std::max(best, b.tpr);
    } else if (a.fpr <= q && b.fpr > a.fpr) {
      const double t = (q - a.fpr) / (b.fpr - a.fpr);
      best = std::max(best, a.tpr + t * (b.tpr - a.tpr));
    }
  }
  return best;
}

absl::StatusOr<std::vector<bool>> PredictAtFpr(const ScoreTable& table,
                                               double q) {
  IHA_ASSIGN_OR_RETURN(RocCurve curve, ComputeRoc(table));
  const RocPoint point = OperatingPointAtFpr(curve, q);
  std::vector<bool> out;
  out.reserve(table.rows.size());
  for (const ScoreRow& r : table.rows) out.push_back(r.score > point.threshold);
  return out;
}

absl::StatusOr<std::vector<AttackSummary>> Aggregate(
    std::span<const ScoreTable> tables) {
  if (tables.empty()) {
    return MakeError(ErrorCode::kInvalidArgument, "no score tables");
  }
  std::vector<AttackSummary> out;
  std::map<std::string, std::size_t> slot;
  std::vector<std::vector<double>> tpr1;
  std::vector<std::vector<double>> tpr01;
  for (const ScoreTable& table : tables) {
    auto [it, inserted] = slot.emplace(table.attack_id, out.size());
    if (inserted) {
      out.emplace_back();
      out.back().attack_id = table.attack_id;
      tpr1.emplace_back();
      tpr01.emplace_back();
    }
    IHA_ASSIGN_OR_RETURN(RocCurve curve, ComputeRoc(table));
    AttackSummary& s = out[it->second];
    s.target_models.push_back(table.target_model_id);
    s.aucs.push_back(Auc(curve));
    tpr1[it->second].push_back(TprAtFpr(curve, 0.01));
    tpr01[it->second].push_back(TprAtFpr(curve, 0.001));
  }
  auto mean = [](const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) /
           static_cast<double>(xs.size());
  };
  for (std::size_t k = 0; k < out.size(); ++k) {
    AttackSummary& s = out[k];
    s.auc_mean = mean(s.aucs);
    if (s.aucs.size() >= 2) {
      double ss = 0.0;
      for (double a : s.aucs) ss += (a - s.auc_mean) * (a - s.auc_mean);
      s.auc_std = std::sqrt(ss / static_cast<double>(s.aucs.size() - 1));
    }
    s.tpr_at_1pct_mean = mean(tpr1[k]);
    s.tpr_at_01pct_mean = mean(tpr01[k]);
  }
  return out;
}

absl::StatusOr<AgreementMatrix> AgreementFromPredictions(
    const std::vector<std::string>& names,
    const std::vector<std::vector<bool>>& predictions,
    const std::vector<bool>& labels) {
  if (names.size() != predictions.size()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "one name per prediction set is required");
  }
  for (const auto& p : predictions) {
    if (p.size() != labels.size()) {
      return MakeError(ErrorCode::kIndexMismatch,
                       "prediction sets cover different records");
    }
  }
  const std::size_t members =
      static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (members == 0 || members == labels.size()) {
    return MakeError(ErrorCode::kDegenerateLabels,
                     "agreement needs members and non-members");
  }
  std::vector<std::vector<bool>> sets;
  sets.push_back(labels);
  sets.insert(sets.end(), predictions.begin(), predictions.end());
  AgreementMatrix out;
  out.names.push_back("GT");
  out.names.insert(out.names.end(), names.begin(), names.end());
  const auto k = static_cast<Eigen::Index>(sets.size());
  out.values = Matrix::Identity(k, k);
  const double nonmembers = static_cast<double>(labels.size() - members);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      std::size_t agree_in = 0;
      std::size_t agree_out = 0;
      for (std::size_t r = 0; r < labels.size(); ++r) {
        const bool same = sets[i][r] == sets[j][r];
        if (!same) continue;
        if (labels[r]) {
          ++agree_in;
        } else {
          ++agree_out;
        }
      }
      out.values(i, j) = static_cast<double>(agree_in) / members;
      out.values(j, i) = static_cast<double>(agree_out) / nonmembers;
    }
  }
  for (const auto& p : predictions) {
    std::size_t fp = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (!labels[r] && p[r]) ++fp;
    }
    out.realized_fpr.push_back(static_cast<double>(fp) / nonmembers);
  }
  return out;
}

absl::StatusOr<AgreementMatrix> ComputeAgreementMatrix(
    std::span<const ScoreTable> tables, double q) {
  if (tables.empty()) {
    return MakeError(ErrorCode::kInvalidArgument, "no score tables");
  }
  // Canonical record order: ascending index of the first table.
  auto sorted_rows = [](const ScoreTable& t) {
    std::vector<ScoreRow> rows = t.rows;
    std::sort(rows.begin(), rows.end(),
              [](const ScoreRow& a, const ScoreRow& b) {
                return a.record_index < b.record_index;
              });
    return rows;
  };
  const std::vector<ScoreRow> reference = sorted_rows(tables.front());
  std::vector<bool> labels;
  labels.reserve(reference.size());
  for (const ScoreRow& r : reference) labels.push_back(r.is_member);

  std::vector<std::string> names;
  std::vector<std::vector<bool>> predictions;
  for (const ScoreTable& table : tables) {
    ScoreTable ordered = table;
    ordered.rows = sorted_rows(table);
    if (ordered.rows.size() != reference.size()) {
      return MakeError(ErrorCode::kIndexMismatch,
                       absl::StrCat("table ", table.attack_id,
                                    " covers a different record set"));
    }
    for (std::size_t r = 0; r < reference.size(); ++r) {
      if (ordered.rows[r].record_index != reference[r].record_index ||
          ordered.rows[r].is_member != reference[r].is_member) {
        return MakeError(ErrorCode::kIndexMismatch,
                         absl::StrCat("table ", table.attack_id,
                                      " disagrees on record ",
                                      ordered.rows[r].record_index));
      }
    }
    IHA_ASSIGN_OR_RETURN(std::vector<bool> pred, PredictAtFpr(ordered, q));
    names.push_back(table.attack_id);
    predictions.push_back(std::move(pred));
  }
  IHA_ASSIGN_OR_RETURN(AgreementMatrix out,
                       AgreementFromPredictions(names, predictions, labels));
  out.q = q;
  return out;
}

std::string ScoreTableToCsv(const ScoreTable& table,
                            absl::string_view config_hash) {
  std::string out = absl::StrCat("# config_hash=", config_hash,
                                 ",target_model=", table.target_model_id, "\n",
                                 "record_index,attack,score,is_member\n");
  for (const ScoreRow& r : table.rows) {
    absl::StrAppend(&out, r.record_index, ",", table.attack_id, ",",
                    FormatDouble(r.score), ",", r.is_member ? 1 : 0, "\n");
  }
  return out;
}

absl::StatusOr<ScoreTable> ScoreTableFromCsv(absl::string_view text,
                                             std::string* config_hash) {
  ScoreTable table;
  bool header_seen = false;
  std::size_t line_no = 0;
  for (absl::string_view raw : absl::StrSplit(text, '\n')) {
    ++line_no;
    const absl::string_view line = absl::StripAsciiWhitespace(raw);
    if (line.empty()) continue;
    if (absl::StartsWith(line, "#")) {
      for (absl::string_view kv :
           absl::StrSplit(absl::StripAsciiWhitespace(line.substr(1)), ',')) {
        std::pair<absl::string_view, absl::string_view> parts =
            absl::StrSplit(kv, absl::MaxSplits('=', 1));
        if (parts.first == "config_hash" && config_hash != nullptr) {
          *config_hash = std::string(parts.second);
        } else if (parts.first == "target_model" &&
                   !absl::SimpleAtoi(parts.second, &table.target_model_id)) {
          return MakeError(ErrorCode::kFormatError, "bad target_model value");
        }
      }
      continue;
    }
    if (!header_seen) {
      if (line != "record_index,attack,score,is_member") {
        return MakeError(ErrorCode::kFormatError,
                         absl::StrCat("unexpected score table header '", line,
                                      "'"));
      }
      header_seen = true;
      continue;
    }
    std::vector<absl::string_view> fields = absl::StrSplit(line, ',');
    ScoreRow row;
    int member = -1;
    if (fields.size() != 4 || !absl::SimpleAtoi(fields[0], &row.record_index) ||
        !absl::SimpleAtod(fields[2], &row.score) ||
        !absl::SimpleAtoi(fields[3], &member) || (member != 0 && member != 1)) {
      return MakeError(ErrorCode::kFormatError,
                       absl::StrFormat("malformed score row at line %d",
                                       line_no));
    }
    if (table.rows.empty()) {
      table.attack_id = std::string(fields[1]);
    } else if (fields[1] != table.attack_id) {
      return MakeError(ErrorCode::kFormatError,
                       "score table mixes several attacks");
    }
    row.is_member = member == 1;
    table.rows.push_back(row);
  }
  if (!header_seen) {
    return MakeError(ErrorCode::kFormatError, "score table has no header");
  }
  return table;
}

std::string RocToCsv(const RocCurve& curve, absl::string_view config_hash) {
  std::string out = absl::StrCat("# config_hash=", config_hash, "\nfpr,tpr\n");
  for (const RocPoint& p : curve.points) {
    absl::StrAppend(&out, FormatDouble(p.fpr), ",", FormatDouble(p.tpr), "\n");
  }
  return out;
}

std::string AgreementToCsv(const AgreementMatrix& matrix,
                           absl::string_view config_hash) {
  std::string out = absl::StrCat("# config_hash=", config_hash,
                                 ",q=", FormatDouble(matrix.q), "\nname");
  for (const std::string& name : matrix.names) absl::StrAppend(&out, ",", name);
  out.push_back('\n');
  for (std::size_t i = 0; i < matrix.names.size(); ++i) {
    out += matrix.names[i];
    for (std::size_t j = 0; j < matrix.names.size(); ++j) {
      absl::StrAppend(&out, ",",
                      FormatDouble(matrix.values(static_cast<Eigen::Index>(i),
                                                 static_cast<Eigen::Index>(j))));
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace iha
