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

#include "iha/experiment.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <system_error>
#include <utility>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_replace.h"
#include "iha/dynamics.h"
#include "iha/io.h"
#include "iha/parallel.h"
#include "iha/rng.h"
#include "iha/status.h"
#include "json.hpp"

namespace iha {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Seed streams derived from ExperimentConfig::seed.
constexpr std::uint64_t kMaskStream = 0x6d61736b;
constexpr std::uint64_t kTrainStream = 0x747261696e;
constexpr std::uint64_t kCandidateStream = 0x63616e64;
constexpr std::uint64_t kL0Stream = 0x6c30;
constexpr std::uint64_t kLooStream = 0x6c6f6f;

constexpr char kThresholdConvention[] =
    "member iff score > threshold; AUC ties count half; TPR@FPR uses the "
    "largest achievable FPR <= q";

// ---------------------------------------------------------------------------
// Enum names.

std::string SourceName(DatasetSource s) {
  switch (s) {
    case DatasetSource::kSynthetic:
      return "synthetic";
    case DatasetSource::kCsv:
      return "csv";
    case DatasetSource::kIdx:
      return "idx";
  }
  return "synthetic";
}

std::string LossName(LossKind k) {
  return k == LossKind::kCrossEntropy ? "cross_entropy" : "squared_error";
}

std::string SamplingName(BatchSampling s) {
  return s == BatchSampling::kIid ? "iid" : "shuffle";
}

std::string HessianModeName(HessianMode m) {
  return m == HessianMode::kHvpOnly ? "cg" : "exact";
}

std::string OutputModeName(IhaOutputMode m) {
  return m == IhaOutputMode::kSigmoidProbability ? "sigmoid" : "raw";
}

std::string LiraModeName(LiraMode m) {
  return m == LiraMode::kOffline ? "offline" : "online";
}

std::string StatisticName(LiraStatistic s) {
  return s == LiraStatistic::kLogitConfidence ? "logit" : "loss";
}

std::string ConditioningModeName(ConditioningMode m) {
  return m == ConditioningMode::kLowRank ? "low_rank" : "damped";
}

absl::Status FormatErrorf(absl::string_view what) {
  return MakeError(ErrorCode::kFormatError, what);
}

// ---------------------------------------------------------------------------
// JSON conversion. Readers only touch keys that are present, so every field
// has the default of the corresponding struct.

template <typename T>
absl::Status ReadField(const Json& obj, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return absl::OkStatus();
  try {
    out = it->get<T>();
  } catch (const Json::exception& e) {
    return FormatErrorf(absl::StrCat("config key '", key, "': ", e.what()));
  }
  return absl::OkStatus();
}

absl::Status CheckKeys(const Json& obj, absl::string_view where,
                       std::initializer_list<absl::string_view> allowed) {
  if (!obj.is_object()) {
    return FormatErrorf(absl::StrCat(where, " must be a JSON object"));
  }
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const absl::string_view key = it.key();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      return FormatErrorf(
          absl::StrCat("unknown key '", it.key(), "' in ", where));
    }
  }
  return absl::OkStatus();
}

Json DatasetToJson(const DatasetConfig& d) {
  Json j;
  j["source"] = SourceName(d.source);
  switch (d.source) {
    case DatasetSource::kSynthetic:
      j["seed"] = d.seed;
      j["size"] = d.size;
      j["feature_dim"] = d.feature_dim;
      j["num_classes"] = d.num_classes;
      j["separation"] = d.separation;
      break;
    case DatasetSource::kCsv:
      j["csv_path"] = d.csv_path;
      j["label_column"] = d.label_column;
      break;
    case DatasetSource::kIdx:
      j["images_path"] = d.images_path;
      j["labels_path"] = d.labels_path;
      j["odd_even"] = d.odd_even;
      break;
  }
  j["limit"] = d.limit;
  return j;
}

absl::StatusOr<DatasetConfig> DatasetFromJson(const Json& j) {
  IHA_RETURN_IF_ERROR(CheckKeys(
      j, "dataset",
      {"source", "seed", "size", "feature_dim", "num_classes", "separation",
       "csv_path", "label_column", "images_path", "labels_path", "odd_even",
       "limit"}));
  DatasetConfig d;
  std::string source = "synthetic";
  IHA_RETURN_IF_ERROR(ReadField(j, "source", source));
  if (source == "synthetic") {
    d.source = DatasetSource::kSynthetic;
  } else if (source == "csv") {
    d.source = DatasetSource::kCsv;
  } else if (source == "idx") {
    d.source = DatasetSource::kIdx;
  } else {
    return FormatErrorf(absl::StrCat("unknown dataset source '", source, "'"));
  }
  IHA_RETURN_IF_ERROR(ReadField(j, "seed", d.seed));
  IHA_RETURN_IF_ERROR(ReadField(j, "size", d.size));
  IHA_RETURN_IF_ERROR(ReadField(j, "feature_dim", d.feature_dim));
  IHA_RETURN_IF_ERROR(ReadField(j, "num_classes", d.num_classes));
  IHA_RETURN_IF_ERROR(ReadField(j, "separation", d.separation));
  IHA_RETURN_IF_ERROR(ReadField(j, "csv_path", d.csv_path));
  IHA_RETURN_IF_ERROR(ReadField(j, "label_column", d.label_column));
  IHA_RETURN_IF_ERROR(ReadField(j, "images_path", d.images_path));
  IHA_RETURN_IF_ERROR(ReadField(j, "labels_path", d.labels_path));
  IHA_RETURN_IF_ERROR(ReadField(j, "odd_even", d.odd_even));
  IHA_RETURN_IF_ERROR(ReadField(j, "limit", d.limit));
  return d;
}

Json ModelToJson(const ModelSpec& m) {
  Json j;
  j["architecture"] = m.architecture == Architecture::kMlp ? "mlp" : "linear";
  j["input_dim"] = m.input_dim;
  j["hidden"] = m.hidden_widths;
  j["output_dim"] = m.output_dim;
  j["loss"] = LossName(m.loss);
  return j;
}

absl::StatusOr<ModelSpec> ModelFromJson(const Json& j) {
  IHA_RETURN_IF_ERROR(CheckKeys(
      j, "model", {"architecture", "input_dim", "hidden", "output_dim", "loss"}));
  ModelSpec m;
  std::string arch = "mlp";
  std::string loss = "cross_entropy";
  IHA_RETURN_IF_ERROR(ReadField(j, "architecture", arch));
  IHA_RETURN_IF_ERROR(ReadField(j, "input_dim", m.input_dim));
  IHA_RETURN_IF_ERROR(ReadField(j, "hidden", m.hidden_widths));
  IHA_RETURN_IF_ERROR(ReadField(j, "output_dim", m.output_dim));
  IHA_RETURN_IF_ERROR(ReadField(j, "loss", loss));
  if (arch == "mlp") {
    m.architecture = Architecture::kMlp;
  } else if (arch == "linear") {
    m.architecture = Architecture::kLinear;
  } else {
    return FormatErrorf(absl::StrCat("unknown architecture '", arch, "'"));
  }
  if (loss == "cross_entropy") {
    m.loss = LossKind::kCrossEntropy;
  } else if (loss == "squared_error") {
    m.loss = LossKind::kSquaredError;
  } else {
    return FormatErrorf(absl::StrCat("unknown loss '", loss, "'"));
  }
  return m;
}

Json SgdToJson(const SgdConfig& s) {
  Json j;
  j["learning_rate"] = s.learning_rate;
  j["momentum"] = s.momentum;
  j["weight_decay"] = s.weight_decay;
  j["batch_size"] = s.batch_size;
  j["epochs"] = s.epochs;
  j["sampling"] = SamplingName(s.sampling);
  return j;
}

absl::StatusOr<SgdConfig> SgdFromJson(const Json& j) {
  IHA_RETURN_IF_ERROR(CheckKeys(j, "sgd",
                                {"learning_rate", "momentum", "weight_decay",
                                 "batch_size", "epochs", "sampling"}));
  SgdConfig s;
  std::string sampling = "shuffle";
  IHA_RETURN_IF_ERROR(ReadField(j, "learning_rate", s.learning_rate));
  IHA_RETURN_IF_ERROR(ReadField(j, "momentum", s.momentum));
  IHA_RETURN_IF_ERROR(ReadField(j, "weight_decay", s.weight_decay));
  IHA_RETURN_IF_ERROR(ReadField(j, "batch_size", s.batch_size));
  IHA_RETURN_IF_ERROR(ReadField(j, "epochs", s.epochs));
  IHA_RETURN_IF_ERROR(ReadField(j, "sampling", sampling));
  if (sampling == "shuffle") {
    s.sampling = BatchSampling::kShuffle;
  } else if (sampling == "iid") {
    s.sampling = BatchSampling::kIid;
  } else {
    return FormatErrorf(absl::StrCat("unknown sampling '", sampling, "'"));
  }
  return s;
}

Json AttackToJson(const AttackConfig& a) {
  Json j;
  j["kind"] = AttackKindName(a.kind);
  j["id"] = a.id;
  switch (a.kind) {
    case AttackKind::kIha:
      j["mask"] = a.term_mask.ToString();
      j["l0_fraction"] = a.l0_fraction;
      j["output_mode"] = OutputModeName(a.output_mode);
      [[fallthrough]];
    case AttackKind::kSif:
      j["conditioning"] = {{"mode", ConditioningModeName(a.conditioning.mode)},
                           {"epsilon", a.conditioning.epsilon}};
      j["hessian_mode"] = HessianModeName(a.hessian_mode);
      break;
    case AttackKind::kLira:
      j["lira_mode"] = LiraModeName(a.lira_mode);
      j["statistic"] = StatisticName(a.statistic);
      break;
    case AttackKind::kLAttack:
    case AttackKind::kLiraL:
      j["references"] = a.references;
      break;
    case AttackKind::kLoss:
      break;
  }
  j["max_candidates"] = a.max_candidates;
  return j;
}

std::string FormatShort(double x) { return absl::StrFormat("%g", x); }

std::string DefaultAttackId(const AttackConfig& a) {
  std::string id = AttackKindName(a.kind);
  const bool inverse = a.kind == AttackKind::kIha || a.kind == AttackKind::kSif;
  if (a.kind == AttackKind::kIha && !(a.term_mask.loss && a.term_mask.i1 &&
                                      a.term_mask.i2 && a.term_mask.i3 &&
                                      a.term_mask.i4)) {
    absl::StrAppend(&id, "_",
                    absl::StrReplaceAll(a.term_mask.ToString(), {{",", "+"}}));
  }
  if (a.kind == AttackKind::kIha && a.l0_fraction < 1.0) {
    absl::StrAppend(&id, "_l0-", FormatShort(a.l0_fraction));
  }
  if (a.kind == AttackKind::kIha &&
      a.output_mode == IhaOutputMode::kSigmoidProbability) {
    absl::StrAppend(&id, "_sigmoid");
  }
  if (inverse) {
    const ConditioningPolicy def = ConditioningPolicy::Damped(0.2);
    if (a.conditioning.mode != def.mode ||
        a.conditioning.epsilon != def.epsilon) {
      absl::StrAppend(&id, "_", ConditioningModeName(a.conditioning.mode),
                      FormatShort(a.conditioning.epsilon));
    }
    if (a.hessian_mode == HessianMode::kHvpOnly) absl::StrAppend(&id, "_cg");
  }
  if (a.kind == AttackKind::kLira) {
    absl::StrAppend(&id, "_", LiraModeName(a.lira_mode));
    if (a.statistic == LiraStatistic::kLogitConfidence) {
      absl::StrAppend(&id, "_logit");
    }
  }
  return id;
}

absl::StatusOr<AttackConfig> AttackFromJson(const Json& j) {
  IHA_RETURN_IF_ERROR(CheckKeys(
      j, "attack",
      {"kind", "id", "mask", "l0_fraction", "output_mode", "conditioning",
       "hessian_mode", "lira_mode", "statistic", "references",
       "max_candidates"}));
  AttackConfig a;
  std::string kind;
  IHA_RETURN_IF_ERROR(ReadField(j, "kind", kind));
  if (kind == "loss") {
    a.kind = AttackKind::kLoss;
  } else if (kind == "sif") {
    a.kind = AttackKind::kSif;
  } else if (kind == "iha") {
    a.kind = AttackKind::kIha;
  } else if (kind == "lira") {
    a.kind = AttackKind::kLira;
  } else if (kind == "lattack") {
    a.kind = AttackKind::kLAttack;
  } else if (kind == "liral") {
    a.kind = AttackKind::kLiraL;
  } else {
    return FormatErrorf(absl::StrCat("unknown attack kind '", kind, "'"));
  }
  IHA_RETURN_IF_ERROR(ReadField(j, "id", a.id));
  std::string mask = "all";
  IHA_RETURN_IF_ERROR(ReadField(j, "mask", mask));
  IHA_ASSIGN_OR_RETURN(a.term_mask, ParseTermMask(mask));
  IHA_RETURN_IF_ERROR(ReadField(j, "l0_fraction", a.l0_fraction));
  std::string output = "raw";
  IHA_RETURN_IF_ERROR(ReadField(j, "output_mode", output));
  if (output == "raw") {
    a.output_mode = IhaOutputMode::kRawScore;
  } else if (output == "sigmoid") {
    a.output_mode = IhaOutputMode::kSigmoidProbability;
  } else {
    return FormatErrorf(absl::StrCat("unknown output_mode '", output, "'"));
  }
  if (auto it = j.find("conditioning"); it != j.end()) {
    IHA_RETURN_IF_ERROR(CheckKeys(*it, "conditioning", {"mode", "epsilon"}));
    std::string mode = "damped";
    double eps = 0.2;
    IHA_RETURN_IF_ERROR(ReadField(*it, "mode", mode));
    IHA_RETURN_IF_ERROR(ReadField(*it, "epsilon", eps));
    IHA_ASSIGN_OR_RETURN(a.conditioning, ParseConditioningPolicy(mode, eps));
  }
  std::string hmode = "exact";
  IHA_RETURN_IF_ERROR(ReadField(j, "hessian_mode", hmode));
  if (hmode == "exact") {
    a.hessian_mode = HessianMode::kExactHessian;
  } else if (hmode == "cg") {
    a.hessian_mode = HessianMode::kHvpOnly;
  } else {
    return FormatErrorf(absl::StrCat("unknown hessian_mode '", hmode, "'"));
  }
  std::string lmode = "online";
  IHA_RETURN_IF_ERROR(ReadField(j, "lira_mode", lmode));
  if (lmode == "online") {
    a.lira_mode = LiraMode::kOnline;
  } else if (lmode == "offline") {
    a.lira_mode = LiraMode::kOffline;
  } else {
    return FormatErrorf(absl::StrCat("unknown lira_mode '", lmode, "'"));
  }
  std::string stat = "loss";
  IHA_RETURN_IF_ERROR(ReadField(j, "statistic", stat));
  if (stat == "loss") {
    a.statistic = LiraStatistic::kLoss;
  } else if (stat == "logit") {
    a.statistic = LiraStatistic::kLogitConfidence;
  } else {
    return FormatErrorf(absl::StrCat("unknown statistic '", stat, "'"));
  }
  IHA_RETURN_IF_ERROR(ReadField(j, "references", a.references));
  IHA_RETURN_IF_ERROR(ReadField(j, "max_candidates", a.max_candidates));
  if (a.id.empty()) a.id = DefaultAttackId(a);
  return a;
}

Json ConfigToJson(const ExperimentConfig& cfg, bool include_runtime) {
  Json j;
  j["version"] = kConfigVersion;
  j["seed"] = cfg.seed;
  j["num_models"] = cfg.num_models;
  j["gamma"] = cfg.gamma;
  j["targets"] = cfg.targets;
  j["agreement_q"] = cfg.agreement_q;
  j["dataset"] = DatasetToJson(cfg.dataset);
  j["model"] = ModelToJson(cfg.model);
  j["sgd"] = SgdToJson(cfg.sgd);
  j["hessian"] = {{"max_bytes", cfg.hessian_options.max_bytes},
                  {"block_columns", cfg.hessian_options.block_columns}};
  Json attacks = Json::array();
  for (const AttackConfig& a : cfg.attacks) attacks.push_back(AttackToJson(a));
  j["attacks"] = attacks;
  if (include_runtime) {
    j["output_dir"] = cfg.output_dir;
    j["threads"] = cfg.threads;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Artifacts.

absl::Status EnsureDirectory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    return MakeError(ErrorCode::kIoError,
                     absl::StrCat("cannot create directory ", dir.string(),
                                  ec ? absl::StrCat(": ", ec.message()) : ""));
  }
  return absl::OkStatus();
}

absl::Status RequireFile(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    return MakeError(ErrorCode::kMissingArtifact,
                     absl::StrCat("missing artifact ", path.string()));
  }
  return absl::OkStatus();
}

absl::Status WriteJson(const fs::path& path, const Json& j) {
  return WriteFileAtomic(path, j.dump(2) + "\n");
}

struct TrainedModel {
  ParameterVector w;
  MembershipMask mask;
};

absl::StatusOr<MembershipMask> ExpectedMask(const ExperimentConfig& cfg,
                                            std::size_t n, int index) {
  return BernoulliSplit(n, cfg.gamma, SeedsForModel(cfg, index).mask_seed);
}

// Loads model `index`; MissingArtifact names the absent file.
absl::StatusOr<TrainedModel> LoadModel(const ExperimentConfig& cfg,
                                       int index) {
  const fs::path params = ModelParamsPath(cfg, index);
  const fs::path mask = ModelMaskPath(cfg, index);
  IHA_RETURN_IF_ERROR(RequireFile(params));
  IHA_RETURN_IF_ERROR(RequireFile(mask));
  TrainedModel m;
  IHA_ASSIGN_OR_RETURN(m.w, LoadParameters(cfg.model, params));
  IHA_ASSIGN_OR_RETURN(m.mask, LoadMask(mask));
  return m;
}

// A stored model is reusable when it parses and its mask is the one this
// config would draw.
bool StoredModelIsCurrent(const ExperimentConfig& cfg, std::size_t n,
                          int index) {
  absl::StatusOr<TrainedModel> m = LoadModel(cfg, index);
  if (!m.ok()) return false;
  absl::StatusOr<MembershipMask> expected = ExpectedMask(cfg, n, index);
  if (!expected.ok()) return false;
  return m->mask.bits == expected->bits && m->mask.seed == expected->seed &&
         m->w.size() == cfg.model.ParameterCount();
}

absl::Status CheckModelMatchesDataset(const ModelSpec& spec,
                                      const Dataset& dataset) {
  if (spec.input_dim != dataset.feature_dim) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     absl::StrFormat("model input_dim %d but dataset has %d "
                                     "features",
                                     spec.input_dim, dataset.feature_dim));
  }
  if (spec.loss == LossKind::kCrossEntropy &&
      spec.output_dim != dataset.num_classes) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     absl::StrFormat("model output_dim %d but dataset has %d "
                                     "classes",
                                     spec.output_dim, dataset.num_classes));
  }
  return absl::OkStatus();
}

std::string FileHash(const fs::path& path) {
  absl::StatusOr<std::string> bytes = ReadFileBytes(path);
  return bytes.ok() ? HexU64(Fnv1a64(*bytes)) : std::string();
}

fs::path HessianSidecarPath(const ExperimentConfig& cfg, int index) {
  fs::path p = HessianPath(cfg, index);
  p += ".json";
  return p;
}

// Returns the stored eigendecomposition when it belongs to the current
// parameter file.
std::optional<EigenDecomposition> LoadFreshHessian(const ExperimentConfig& cfg,
                                                   int index) {
  absl::StatusOr<std::string> side =
      ReadFileBytes(HessianSidecarPath(cfg, index));
  if (!side.ok()) return std::nullopt;
  Json j = Json::parse(*side, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("params_hash")) {
    return std::nullopt;
  }
  if (j["params_hash"] != FileHash(ModelParamsPath(cfg, index))) {
    return std::nullopt;
  }
  absl::StatusOr<EigenDecomposition> eig =
      LoadEigenDecomposition(HessianPath(cfg, index));
  if (!eig.ok() ||
      static_cast<std::size_t>(eig->dim()) != cfg.model.ParameterCount()) {
    return std::nullopt;
  }
  return *std::move(eig);
}

// Target members plus an equal-size sample of non-members, ascending.
absl::StatusOr<std::vector<std::size_t>> SelectCandidates(
    const ExperimentConfig& cfg, const MembershipMask& mask, int target,
    std::size_t max_candidates) {
  std::vector<std::size_t> members = mask.Members();
  std::vector<std::size_t> non_members = mask.NonMembers();
  if (members.empty() || non_members.empty()) {
    return MakeError(ErrorCode::kDegenerateLabels,
                     absl::StrFormat("target %d has %d members and %d "
                                     "non-members",
                                     target, members.size(),
                                     non_members.size()));
  }
  CounterRng rng(DeriveSeed(DeriveSeed(cfg.seed, kCandidateStream),
                            static_cast<std::uint64_t>(target)));
  std::size_t per_class = std::min(members.size(), non_members.size());
  std::vector<std::size_t> member_pick;
  if (max_candidates > 0 && 2 * per_class > max_candidates) {
    per_class = std::max<std::size_t>(1, max_candidates / 2);
    member_pick = SampleWithoutReplacement(members.size(), per_class, rng);
  } else {
    member_pick.resize(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) member_pick[i] = i;
  }
  std::vector<std::size_t> out;
  for (std::size_t i : member_pick) out.push_back(members[i]);
  for (std::size_t i :
       SampleWithoutReplacement(non_members.size(), per_class, rng)) {
    out.push_back(non_members[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Runs `fn` for every candidate slot and collects the scores.
absl::StatusOr<std::vector<double>> ScoreCandidates(
    const ExperimentConfig& cfg, std::size_t count,
    const std::function<absl::StatusOr<double>(std::size_t)>& fn) {
  std::vector<double> scores(count, 0.0);
  IHA_RETURN_IF_ERROR(ParallelFor(count, cfg.ThreadCount(),
                                  [&](std::size_t k) -> absl::Status {
                                    IHA_ASSIGN_OR_RETURN(scores[k], fn(k));
                                    return absl::OkStatus();
                                  }));
  return scores;
}

SgdConfig SgdWithSeed(const SgdConfig& base, std::uint64_t seed) {
  SgdConfig s = base;
  s.seed = seed;
  return s;
}

fs::path LooPath(const ExperimentConfig& cfg, int target,
                 std::optional<std::size_t> left_out, int ref) {
  const std::string name =
      left_out.has_value()
          ? absl::StrFormat("target%d_loo%d_ref%d.params", target, *left_out,
                            ref)
          : absl::StrFormat("target%d_ref%d.params", target, ref);
  return fs::path(cfg.output_dir) / "lattack" / name;
}

// Reference model trained on the target's member set, minus `left_out` when
// given. Cached on disk.
absl::StatusOr<ParameterVector> LooReference(
    const ExperimentConfig& cfg, const Dataset& dataset,
    const std::vector<std::size_t>& members, int target,
    std::optional<std::size_t> left_out, int ref) {
  const fs::path path = LooPath(cfg, target, left_out, ref);
  if (absl::StatusOr<ParameterVector> cached =
          LoadParameters(cfg.model, path);
      cached.ok()) {
    return cached;
  }
  std::vector<Record> records;
  records.reserve(members.size());
  for (std::size_t idx : members) {
    if (left_out.has_value() && idx == *left_out) continue;
    records.push_back(dataset.records[idx]);
  }
  const std::uint64_t seed =
      DeriveSeed(DeriveSeed(DeriveSeed(cfg.seed, kLooStream),
                            static_cast<std::uint64_t>(target)),
                 static_cast<std::uint64_t>(ref));
  IHA_ASSIGN_OR_RETURN(
      ParameterVector w,
      TrainOnRecords(cfg.model, records, SgdWithSeed(cfg.sgd, seed)));
  IHA_RETURN_IF_ERROR(SaveParameters(cfg.model, w, path));
  return w;
}

std::uint64_t L0Seed(const ExperimentConfig& cfg, int target) {
  return DeriveSeed(DeriveSeed(cfg.seed, kL0Stream),
                    static_cast<std::uint64_t>(target));
}

double Mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

Json OptionalNumber(const std::optional<double>& x) {
  return x.has_value() ? Json(*x) : Json(nullptr);
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig.

std::string AttackKindName(AttackKind kind) {
  switch (kind) {
    case AttackKind::kLoss:
      return "loss";
    case AttackKind::kSif:
      return "sif";
    case AttackKind::kIha:
      return "iha";
    case AttackKind::kLira:
      return "lira";
    case AttackKind::kLAttack:
      return "lattack";
    case AttackKind::kLiraL:
      return "liral";
  }
  return "loss";
}

absl::Status ExperimentConfig::Validate() const {
  IHA_RETURN_IF_ERROR(model.Validate());
  IHA_RETURN_IF_ERROR(sgd.Validate());
  if (num_models < 1) {
    return MakeError(ErrorCode::kInvalidArgument, "num_models must be >= 1");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument, "gamma must be in (0,1)");
  }
  if (!(agreement_q > 0.0 && agreement_q < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "agreement_q must be in (0,1)");
  }
  for (int t : targets) {
    if (t < 0 || t >= num_models) {
      return MakeError(ErrorCode::kInvalidArgument,
                       absl::StrFormat("target %d outside [0, %d)", t,
                                       num_models));
    }
  }
  switch (dataset.source) {
    case DatasetSource::kSynthetic:
      if (dataset.size == 0 || dataset.feature_dim < 1 ||
          dataset.num_classes < 2) {
        return MakeError(ErrorCode::kInvalidArgument,
                         "synthetic dataset needs size >= 1, feature_dim >= 1 "
                         "and num_classes >= 2");
      }
      break;
    case DatasetSource::kCsv:
      if (dataset.csv_path.empty()) {
        return MakeError(ErrorCode::kInvalidArgument, "csv_path is empty");
      }
      break;
    case DatasetSource::kIdx:
      if (dataset.images_path.empty() || dataset.labels_path.empty()) {
        return MakeError(ErrorCode::kInvalidArgument,
                         "idx dataset needs images_path and labels_path");
      }
      break;
  }
  std::set<std::string> ids;
  for (const AttackConfig& a : attacks) {
    if (a.id.empty() || a.id.find_first_of("/\\ ") != std::string::npos) {
      return MakeError(ErrorCode::kInvalidArgument,
                       absl::StrCat("attack id '", a.id,
                                    "' must be nonempty without separators"));
    }
    if (!ids.insert(a.id).second) {
      return MakeError(ErrorCode::kInvalidArgument,
                       absl::StrCat("duplicate attack id '", a.id, "'"));
    }
    if (a.term_mask.empty()) {
      return MakeError(ErrorCode::kInvalidArgument, "term mask is empty");
    }
    if (!(a.l0_fraction > 0.0 && a.l0_fraction <= 1.0)) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "l0_fraction must be in (0,1]");
    }
    IHA_RETURN_IF_ERROR(a.conditioning.Validate());
    if ((a.kind == AttackKind::kLAttack || a.kind == AttackKind::kLiraL) &&
        a.references < 2) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "leave-one-out attacks need references >= 2");
    }
    if (a.kind == AttackKind::kLira && num_models < 2) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "lira needs num_models >= 2");
    }
  }
  return absl::OkStatus();
}

std::string ExperimentConfig::CanonicalJson() const {
  return ConfigToJson(*this, /*include_runtime=*/false).dump();
}

std::string ExperimentConfig::Hash() const {
  return HexU64(Fnv1a64(CanonicalJson()));
}

int ExperimentConfig::ThreadCount() const {
  return threads > 0 ? threads : DefaultThreadCount();
}

const AttackConfig* ExperimentConfig::FindAttack(absl::string_view id) const {
  for (const AttackConfig& a : attacks) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

absl::StatusOr<ExperimentConfig> ParseExperimentConfig(absl::string_view text) {
  Json j = Json::parse(text.begin(), text.end(), nullptr, false);
  if (j.is_discarded()) return FormatErrorf("config is not valid JSON");
  IHA_RETURN_IF_ERROR(CheckKeys(
      j, "config",
      {"version", "seed", "num_models", "gamma", "targets", "agreement_q",
       "dataset", "model", "sgd", "hessian", "attacks", "output_dir",
       "threads"}));
  int version = kConfigVersion;
  IHA_RETURN_IF_ERROR(ReadField(j, "version", version));
  if (version != kConfigVersion) {
    return FormatErrorf(absl::StrFormat("config version %d, expected %d",
                                        version, kConfigVersion));
  }
  ExperimentConfig cfg;
  IHA_RETURN_IF_ERROR(ReadField(j, "seed", cfg.seed));
  IHA_RETURN_IF_ERROR(ReadField(j, "num_models", cfg.num_models));
  IHA_RETURN_IF_ERROR(ReadField(j, "gamma", cfg.gamma));
  IHA_RETURN_IF_ERROR(ReadField(j, "targets", cfg.targets));
  IHA_RETURN_IF_ERROR(ReadField(j, "agreement_q", cfg.agreement_q));
  IHA_RETURN_IF_ERROR(ReadField(j, "output_dir", cfg.output_dir));
  IHA_RETURN_IF_ERROR(ReadField(j, "threads", cfg.threads));
  if (auto it = j.find("dataset"); it != j.end()) {
    IHA_ASSIGN_OR_RETURN(cfg.dataset, DatasetFromJson(*it));
  }
  if (auto it = j.find("model"); it != j.end()) {
    IHA_ASSIGN_OR_RETURN(cfg.model, ModelFromJson(*it));
  }
  if (auto it = j.find("sgd"); it != j.end()) {
    IHA_ASSIGN_OR_RETURN(cfg.sgd, SgdFromJson(*it));
  }
  if (auto it = j.find("hessian"); it != j.end()) {
    IHA_RETURN_IF_ERROR(
        CheckKeys(*it, "hessian", {"max_bytes", "block_columns"}));
    IHA_RETURN_IF_ERROR(
        ReadField(*it, "max_bytes", cfg.hessian_options.max_bytes));
    IHA_RETURN_IF_ERROR(
        ReadField(*it, "block_columns", cfg.hessian_options.block_columns));
  }
  if (auto it = j.find("attacks"); it != j.end()) {
    if (!it->is_array()) return FormatErrorf("attacks must be an array");
    for (const Json& a : *it) {
      IHA_ASSIGN_OR_RETURN(AttackConfig attack, AttackFromJson(a));
      cfg.attacks.push_back(std::move(attack));
    }
  }
  IHA_RETURN_IF_ERROR(cfg.Validate());
  return cfg;
}

absl::StatusOr<ExperimentConfig> LoadExperimentConfig(const fs::path& path) {
  IHA_RETURN_IF_ERROR(RequireFile(path));
  IHA_ASSIGN_OR_RETURN(std::string text, ReadFileBytes(path));
  IHA_ASSIGN_OR_RETURN(ExperimentConfig cfg, ParseExperimentConfig(text));
  // Relative dataset paths resolve against the config file's directory.
  const fs::path base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).string();
  };
  resolve(cfg.dataset.csv_path);
  resolve(cfg.dataset.images_path);
  resolve(cfg.dataset.labels_path);
  for (const std::string* p : {&cfg.dataset.csv_path, &cfg.dataset.images_path,
                               &cfg.dataset.labels_path}) {
    if (!p->empty()) IHA_RETURN_IF_ERROR(RequireFile(*p));
  }
  if (const char* dir = std::getenv("IHA_OUTPUT_DIR");
      dir != nullptr && *dir != '\0') {
    cfg.output_dir = dir;
  }
  if (const char* threads = std::getenv("IHA_THREADS"); threads != nullptr) {
    int value = 0;
    if (absl::SimpleAtoi(threads, &value) && value > 0) cfg.threads = value;
  }
  return cfg;
}

std::string ExperimentConfigToJson(const ExperimentConfig& cfg) {
  return ConfigToJson(cfg, /*include_runtime=*/true).dump(2) + "\n";
}

absl::StatusOr<Dataset> LoadExperimentDataset(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  Dataset dataset;
  switch (d.source) {
    case DatasetSource::kSynthetic: {
      IHA_ASSIGN_OR_RETURN(dataset, SynthTabular(d.seed, d.size, d.feature_dim,
                                                 d.num_classes, d.separation));
      break;
    }
    case DatasetSource::kCsv: {
      IHA_ASSIGN_OR_RETURN(dataset, LoadCsvTabular(d.csv_path, d.label_column));
      break;
    }
    case DatasetSource::kIdx: {
      IdxOptions options;
      options.odd_even = d.odd_even;
      IHA_ASSIGN_OR_RETURN(dataset,
                           LoadIdx(d.images_path, d.labels_path, options));
      break;
    }
  }
  if (d.limit > 0 && dataset.records.size() > d.limit) {
    dataset.records.resize(d.limit);
  }
  IHA_RETURN_IF_ERROR(dataset.Validate());
  IHA_RETURN_IF_ERROR(CheckModelMatchesDataset(cfg.model, dataset));
  return dataset;
}

ModelSeeds SeedsForModel(const ExperimentConfig& cfg, int index) {
  const auto i = static_cast<std::uint64_t>(index);
  return {DeriveSeed(DeriveSeed(cfg.seed, kMaskStream), i),
          DeriveSeed(DeriveSeed(cfg.seed, kTrainStream), i)};
}

fs::path ModelParamsPath(const ExperimentConfig& cfg, int index) {
  return fs::path(cfg.output_dir) / "models" /
         absl::StrCat("model_", index, ".params");
}

fs::path ModelMaskPath(const ExperimentConfig& cfg, int index) {
  return fs::path(cfg.output_dir) / "models" /
         absl::StrCat("model_", index, ".mask");
}

fs::path HessianPath(const ExperimentConfig& cfg, int index) {
  return fs::path(cfg.output_dir) / "hessians" /
         absl::StrCat("model_", index, ".eig");
}

fs::path ScoreTablePath(const ExperimentConfig& cfg,
                        absl::string_view attack_id, int target) {
  return fs::path(cfg.output_dir) / "scores" /
         absl::StrCat(attack_id, "_target", target, ".csv");
}

// ---------------------------------------------------------------------------
// train

absl::StatusOr<TrainReport> CmdTrain(const ExperimentConfig& cfg) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  IHA_RETURN_IF_ERROR(EnsureDirectory(fs::path(cfg.output_dir) / "models"));
  IHA_ASSIGN_OR_RETURN(Dataset dataset, LoadExperimentDataset(cfg));
  const std::size_t n = dataset.size();
  const auto count = static_cast<std::size_t>(cfg.num_models);

  std::vector<char> trained(count, 0);
  IHA_RETURN_IF_ERROR(ParallelFor(
      count, cfg.ThreadCount(), [&](std::size_t k) -> absl::Status {
        const int i = static_cast<int>(k);
        if (StoredModelIsCurrent(cfg, n, i)) return absl::OkStatus();
        IHA_ASSIGN_OR_RETURN(MembershipMask mask, ExpectedMask(cfg, n, i));
        IHA_ASSIGN_OR_RETURN(
            ParameterVector w,
            Train(cfg.model, dataset, mask,
                  SgdWithSeed(cfg.sgd, SeedsForModel(cfg, i).train_seed)));
        IHA_RETURN_IF_ERROR(
            SaveParameters(cfg.model, w, ModelParamsPath(cfg, i)));
        IHA_RETURN_IF_ERROR(SaveMask(mask, ModelMaskPath(cfg, i)));
        trained[k] = 1;
        return absl::OkStatus();
      }));

  std::vector<Json> entries(count);
  IHA_RETURN_IF_ERROR(ParallelFor(
      count, cfg.ThreadCount(), [&](std::size_t k) -> absl::Status {
        const int i = static_cast<int>(k);
        IHA_ASSIGN_OR_RETURN(TrainedModel m, LoadModel(cfg, i));
        const std::vector<Record> in =
            SelectRecords(dataset, m.mask.Members());
        const std::vector<Record> out =
            SelectRecords(dataset, m.mask.NonMembers());
        const ModelSeeds seeds = SeedsForModel(cfg, i);
        Json e;
        e["index"] = i;
        e["mask_seed"] = seeds.mask_seed;
        e["train_seed"] = seeds.train_seed;
        e["members"] = in.size();
        e["params_file"] =
            fs::relative(ModelParamsPath(cfg, i), cfg.output_dir).string();
        e["mask_file"] =
            fs::relative(ModelMaskPath(cfg, i), cfg.output_dir).string();
        e["params_hash"] = FileHash(ModelParamsPath(cfg, i));
        const std::pair<const char*, const std::vector<Record>*> splits[] = {
            {"train", &in}, {"test", &out}};
        for (const auto& [prefix, records] : splits) {
          if (records->empty()) {
            e[absl::StrCat(prefix, "_loss")] = nullptr;
            e[absl::StrCat(prefix, "_accuracy")] = nullptr;
            continue;
          }
          IHA_ASSIGN_OR_RETURN(ModelMetrics metrics,
                               EvaluateModel(cfg.model, m.w, *records));
          e[absl::StrCat(prefix, "_loss")] = metrics.loss;
          e[absl::StrCat(prefix, "_accuracy")] = metrics.accuracy;
        }
        entries[k] = std::move(e);
        return absl::OkStatus();
      }));

  Json manifest;
  manifest["version"] = kConfigVersion;
  manifest["config_hash"] = cfg.Hash();
  manifest["config"] = ConfigToJson(cfg, /*include_runtime=*/false);
  manifest["dataset"] = {{"name", dataset.name},
                         {"schema", dataset.schema},
                         {"records", dataset.size()},
                         {"feature_dim", dataset.feature_dim},
                         {"num_classes", dataset.num_classes}};
  manifest["parameter_count"] = cfg.model.ParameterCount();
  manifest["models"] = entries;
  IHA_RETURN_IF_ERROR(
      WriteJson(fs::path(cfg.output_dir) / "manifest.json", manifest));

  TrainReport report;
  for (std::size_t k = 0; k < count; ++k) {
    if (trained[k]) report.trained.push_back(static_cast<int>(k));
  }
  return report;
}

// ---------------------------------------------------------------------------
// hessian

absl::Status CmdHessian(const ExperimentConfig& cfg,
                        const std::vector<int>& targets) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  IHA_RETURN_IF_ERROR(EnsureDirectory(fs::path(cfg.output_dir) / "hessians"));
  IHA_ASSIGN_OR_RETURN(Dataset dataset, LoadExperimentDataset(cfg));
  for (int t : targets) {
    if (t < 0 || t >= cfg.num_models) {
      return MakeError(ErrorCode::kInvalidArgument,
                       absl::StrFormat("target %d outside [0, %d)", t,
                                       cfg.num_models));
    }
    if (LoadFreshHessian(cfg, t).has_value()) continue;
    IHA_ASSIGN_OR_RETURN(TrainedModel m, LoadModel(cfg, t));
    const std::vector<Record> members =
        SelectRecords(dataset, m.mask.Members());
    IHA_ASSIGN_OR_RETURN(
        SymMatrix h,
        ExactHessian(cfg.model, m.w, members, cfg.hessian_options));
    IHA_ASSIGN_OR_RETURN(EigenDecomposition eig, SymEigendecompose(h));
    IHA_RETURN_IF_ERROR(SaveEigenDecomposition(eig, HessianPath(cfg, t)));
    Json side;
    side["config_hash"] = cfg.Hash();
    side["target"] = t;
    side["params_hash"] = FileHash(ModelParamsPath(cfg, t));
    side["dim"] = eig.dim();
    side["min_eigenvalue"] = eig.eigenvalues.minCoeff();
    side["max_eigenvalue"] = eig.eigenvalues.maxCoeff();
    IHA_RETURN_IF_ERROR(WriteJson(HessianSidecarPath(cfg, t), side));
  }
  return absl::OkStatus();
}

// ---------------------------------------------------------------------------
// audit

absl::StatusOr<ScoreTable> CmdAudit(const ExperimentConfig& cfg,
                                    absl::string_view attack_id, int target) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  const AttackConfig* attack = cfg.FindAttack(attack_id);
  if (attack == nullptr) {
    return MakeError(ErrorCode::kInvalidArgument,
                     absl::StrCat("no attack with id '", attack_id, "'"));
  }
  if (target < 0 || target >= cfg.num_models) {
    return MakeError(ErrorCode::kInvalidArgument,
                     absl::StrFormat("target %d outside [0, %d)", target,
                                     cfg.num_models));
  }
  IHA_RETURN_IF_ERROR(EnsureDirectory(fs::path(cfg.output_dir) / "scores"));
  IHA_ASSIGN_OR_RETURN(Dataset dataset, LoadExperimentDataset(cfg));
  IHA_ASSIGN_OR_RETURN(TrainedModel tm, LoadModel(cfg, target));
  if (tm.mask.size() != dataset.size()) {
    return MakeError(ErrorCode::kIndexMismatch,
                     "stored mask does not match the dataset size");
  }
  IHA_ASSIGN_OR_RETURN(
      std::vector<std::size_t> candidates,
      SelectCandidates(cfg, tm.mask, target, attack->max_candidates));

  Json side;
  side["config_hash"] = cfg.Hash();
  side["attack"] = AttackToJson(*attack);
  side["target_model"] = target;
  side["threshold_convention"] = kThresholdConvention;
  side["candidates"] = candidates.size();
  side["members"] = tm.mask.MemberCount();

  std::vector<double> scores;
  const ModelSpec& spec = cfg.model;
  auto record = [&](std::size_t k) -> const Record& {
    return dataset.records[candidates[k]];
  };

  switch (attack->kind) {
    case AttackKind::kLoss: {
      IHA_ASSIGN_OR_RETURN(
          scores, ScoreCandidates(cfg, candidates.size(), [&](std::size_t k) {
            return LossAttack(spec, tm.w, record(k));
          }));
      break;
    }
    case AttackKind::kSif:
    case AttackKind::kIha: {
      std::optional<EigenDecomposition> stored;
      if (attack->hessian_mode == HessianMode::kExactHessian) {
        stored = LoadFreshHessian(cfg, target);
      }
      side["hessian_source"] =
          attack->hessian_mode == HessianMode::kHvpOnly
              ? "hvp"
              : (stored.has_value() ? "stored" : "computed");
      IHA_ASSIGN_OR_RETURN(
          TargetContext ctx,
          PrepareTargetContext(spec, tm.w, dataset, tm.mask,
                               attack->hessian_mode, cfg.hessian_options,
                               std::move(stored)));
      side["conditioning"] = attack->conditioning.ToString();
      if (attack->kind == AttackKind::kSif) {
        IHA_ASSIGN_OR_RETURN(
            scores, ScoreCandidates(cfg, candidates.size(), [&](std::size_t k) {
              return SifScore(record(k), ctx, attack->conditioning);
            }));
        break;
      }
      IhaConfig ic = IhaConfig::FromSgd(cfg.sgd, ctx.n());
      ic.gamma = cfg.gamma;
      ic.term_mask = attack->term_mask;
      ic.conditioning = attack->conditioning;
      ic.l0_fraction = attack->l0_fraction;
      ic.l0_seed = L0Seed(cfg, target);
      ic.output_mode = attack->output_mode;
      IHA_ASSIGN_OR_RETURN(IhaScorer scorer, IhaScorer::Create(ctx, ic));
      std::atomic<long long> cg_iterations{0};
      std::atomic<int> not_converged{0};
      IHA_ASSIGN_OR_RETURN(
          scores,
          ScoreCandidates(
              cfg, candidates.size(),
              [&](std::size_t k) -> absl::StatusOr<double> {
                IHA_ASSIGN_OR_RETURN(IhaTerms terms,
                                     scorer.Terms(record(k), candidates[k]));
                cg_iterations += terms.cg_iterations;
                if (!terms.converged) ++not_converged;
                return scorer.Score(terms);
              }));
      side["term_mask"] = ic.term_mask.ToString();
      side["lambda"] = ic.lambda;
      side["mu"] = ic.mu;
      side["alpha"] = ic.alpha;
      side["n"] = ic.n;
      side["gamma"] = ic.gamma;
      side["output_mode"] = OutputModeName(ic.output_mode);
      side["train_loss"] = OptionalNumber(ctx.train_loss);
      side["l0_fraction"] = ic.l0_fraction;
      side["l0_seed"] = ic.l0_seed;
      if (ic.l0_fraction < 1.0) {
        Json seeds = Json::object();
        for (std::size_t idx : candidates) {
          seeds[std::to_string(idx)] = DeriveSeed(ic.l0_seed, idx);
        }
        side["l0_subset_seeds"] = seeds;
      }
      if (attack->hessian_mode == HessianMode::kHvpOnly) {
        side["cg_iterations"] = cg_iterations.load();
        side["cg_not_converged"] = not_converged.load();
      }
      break;
    }
    case AttackKind::kLira: {
      std::vector<TrainedModel> refs;
      for (int j = 0; j < cfg.num_models; ++j) {
        if (j == target) continue;
        IHA_ASSIGN_OR_RETURN(TrainedModel r, LoadModel(cfg, j));
        refs.push_back(std::move(r));
      }
      std::atomic<int> clamped{0};
      IHA_ASSIGN_OR_RETURN(
          scores,
          ScoreCandidates(
              cfg, candidates.size(),
              [&](std::size_t k) -> absl::StatusOr<double> {
                const std::size_t idx = candidates[k];
                IHA_ASSIGN_OR_RETURN(double t,
                                     RecordStatistic(spec, tm.w, record(k),
                                                     attack->statistic));
                std::vector<double> in;
                std::vector<double> out;
                for (const TrainedModel& r : refs) {
                  IHA_ASSIGN_OR_RETURN(double s,
                                       RecordStatistic(spec, r.w, record(k),
                                                       attack->statistic));
                  (r.mask.bits[idx] ? in : out).push_back(s);
                }
                absl::StatusOr<LiraResult> res =
                    LiraScore(t, in, out, attack->lira_mode);
                if (!res.ok()) {
                  return MakeError(
                      ErrorCode::kInsufficientReferences,
                      absl::StrFormat("record %d: %d in and %d out reference "
                                      "models (%s)",
                                      idx, in.size(), out.size(),
                                      res.status().message()));
                }
                if (res->variance_clamped) ++clamped;
                return res->score;
              }));
      side["lira_mode"] = LiraModeName(attack->lira_mode);
      side["statistic"] = StatisticName(attack->statistic);
      side["reference_models"] = refs.size();
      side["variance_clamped"] = clamped.load();
      break;
    }
    case AttackKind::kLAttack:
    case AttackKind::kLiraL: {
      IHA_RETURN_IF_ERROR(
          EnsureDirectory(fs::path(cfg.output_dir) / "lattack"));
      const std::vector<std::size_t> members = tm.mask.Members();
      const int r_count = attack->references;
      // Non-members share the references trained on the full member set.
      std::vector<ParameterVector> shared(static_cast<std::size_t>(r_count));
      IHA_RETURN_IF_ERROR(ParallelFor(
          shared.size(), cfg.ThreadCount(), [&](std::size_t j) -> absl::Status {
            IHA_ASSIGN_OR_RETURN(
                shared[j], LooReference(cfg, dataset, members, target,
                                        std::nullopt, static_cast<int>(j)));
            return absl::OkStatus();
          }));
      IHA_ASSIGN_OR_RETURN(
          scores,
          ScoreCandidates(
              cfg, candidates.size(),
              [&](std::size_t k) -> absl::StatusOr<double> {
                const std::size_t idx = candidates[k];
                const bool member = tm.mask.bits[idx];
                IHA_ASSIGN_OR_RETURN(double t, Loss(spec, tm.w, record(k)));
                std::vector<double> ref_losses;
                for (int j = 0; j < r_count; ++j) {
                  ParameterVector w;
                  if (member) {
                    IHA_ASSIGN_OR_RETURN(w, LooReference(cfg, dataset, members,
                                                         target, idx, j));
                  } else {
                    w = shared[static_cast<std::size_t>(j)];
                  }
                  IHA_ASSIGN_OR_RETURN(double l, Loss(spec, w, record(k)));
                  ref_losses.push_back(l);
                }
                if (attack->kind == AttackKind::kLAttack) {
                  return LAttackScore(t, ref_losses);
                }
                IHA_ASSIGN_OR_RETURN(LiraResult res,
                                     LiraLScore(t, ref_losses));
                return res.score;
              }));
      side["references_per_record"] = r_count;
      break;
    }
  }

  ScoreTable table;
  table.attack_id = attack->id;
  table.target_model_id = target;
  table.rows.reserve(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    table.rows.push_back(
        {candidates[k], scores[k], static_cast<bool>(tm.mask.bits[candidates[k]])});
  }
  const fs::path csv = ScoreTablePath(cfg, attack->id, target);
  IHA_RETURN_IF_ERROR(WriteFileAtomic(csv, ScoreTableToCsv(table, cfg.Hash())));
  fs::path sidecar = csv;
  sidecar.replace_extension(".json");
  IHA_RETURN_IF_ERROR(WriteJson(sidecar, side));
  return table;
}

// ---------------------------------------------------------------------------
// evaluate

absl::StatusOr<std::vector<ScoreTable>> LoadScoreTables(
    const std::vector<fs::path>& paths, std::string* config_hash) {
  std::vector<ScoreTable> tables;
  std::optional<std::string> hash;
  for (const fs::path& p : paths) {
    IHA_RETURN_IF_ERROR(RequireFile(p));
    IHA_ASSIGN_OR_RETURN(std::string text, ReadFileBytes(p));
    std::string h;
    absl::StatusOr<ScoreTable> table = ScoreTableFromCsv(text, &h);
    if (!table.ok()) {
      return MakeError(ErrorCode::kFormatError,
                       absl::StrCat(p.string(), ": ", table.status().message()));
    }
    if (hash.has_value() && h != *hash) {
      return MakeError(ErrorCode::kFormatError,
                       absl::StrCat(p.string(), " has config hash '", h,
                                    "', expected '", *hash, "'"));
    }
    hash = h;
    tables.push_back(*std::move(table));
  }
  if (config_hash != nullptr && hash.has_value()) *config_hash = *hash;
  return tables;
}

absl::StatusOr<EvaluateReport> EvaluateTables(
    const std::vector<ScoreTable>& tables, absl::string_view config_hash,
    double agreement_q, const fs::path& out_dir) {
  if (tables.empty()) {
    return MakeError(ErrorCode::kMissingArtifact, "no score tables to evaluate");
  }
  IHA_RETURN_IF_ERROR(EnsureDirectory(out_dir));
  EvaluateReport report;
  IHA_ASSIGN_OR_RETURN(report.summaries, Aggregate(tables));

  Json metrics;
  metrics["version"] = kConfigVersion;
  metrics["config_hash"] = std::string(config_hash);
  metrics["threshold_convention"] = kThresholdConvention;
  metrics["agreement_q"] = agreement_q;

  Json attacks = Json::object();
  for (const AttackSummary& s : report.summaries) {
    Json a;
    a["num_models"] = s.aucs.size();
    a["target_models"] = s.target_models;
    a["aucs"] = s.aucs;
    a["auc_mean"] = s.auc_mean;
    a["auc_std"] = OptionalNumber(s.auc_std);
    a["tpr_at_1pct_fpr"] = s.tpr_at_1pct_mean;
    a["tpr_at_0.1pct_fpr"] = s.tpr_at_01pct_mean;
    std::vector<double> interp1;
    std::vector<double> interp01;
    for (const ScoreTable& t : tables) {
      if (t.attack_id != s.attack_id) continue;
      IHA_ASSIGN_OR_RETURN(RocCurve curve, ComputeRoc(t));
      interp1.push_back(TprAtFprInterpolated(curve, 0.01));
      interp01.push_back(TprAtFprInterpolated(curve, 0.001));
    }
    a["tpr_at_1pct_fpr_interpolated"] = Mean(interp1);
    a["tpr_at_0.1pct_fpr_interpolated"] = Mean(interp01);
    attacks[s.attack_id] = a;
  }
  metrics["attacks"] = attacks;

  for (const ScoreTable& t : tables) {
    IHA_ASSIGN_OR_RETURN(RocCurve curve, ComputeRoc(t));
    IHA_RETURN_IF_ERROR(WriteFileAtomic(
        out_dir / absl::StrCat("roc_", t.attack_id, "_target",
                               t.target_model_id, ".csv"),
        RocToCsv(curve, config_hash)));
  }

  // One agreement matrix per target over the tables that share the record
  // set of that target's first table.
  std::map<int, std::vector<const ScoreTable*>> by_target;
  for (const ScoreTable& t : tables) {
    by_target[t.target_model_id].push_back(&t);
  }
  auto record_set = [](const ScoreTable& t) {
    std::vector<std::size_t> idx;
    for (const ScoreRow& r : t.rows) idx.push_back(r.record_index);
    std::sort(idx.begin(), idx.end());
    return idx;
  };
  Json agreement = Json::object();
  for (const auto& [target, group] : by_target) {
    const std::vector<std::size_t> reference = record_set(*group.front());
    std::vector<ScoreTable> same;
    std::vector<std::string> excluded;
    for (const ScoreTable* t : group) {
      if (record_set(*t) == reference) {
        same.push_back(*t);
      } else {
        excluded.push_back(t->attack_id);
      }
    }
    IHA_ASSIGN_OR_RETURN(AgreementMatrix m,
                         ComputeAgreementMatrix(same, agreement_q));
    const std::string file = absl::StrCat("agreement_target", target, ".csv");
    IHA_RETURN_IF_ERROR(
        WriteFileAtomic(out_dir / file, AgreementToCsv(m, config_hash)));
    Json entry;
    entry["file"] = file;
    entry["names"] = m.names;
    Json realized = Json::object();
    for (std::size_t k = 0; k < m.realized_fpr.size(); ++k) {
      realized[m.names[k + 1]] = m.realized_fpr[k];
    }
    entry["realized_fpr"] = realized;
    entry["excluded_record_set_mismatch"] = excluded;
    agreement[std::to_string(target)] = entry;
  }
  metrics["agreement"] = agreement;

  report.metrics_json = metrics.dump(2) + "\n";
  IHA_RETURN_IF_ERROR(
      WriteFileAtomic(out_dir / "metrics.json", report.metrics_json));
  return report;
}

absl::StatusOr<EvaluateReport> CmdEvaluate(const ExperimentConfig& cfg) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  std::vector<fs::path> paths;
  const std::vector<int> targets =
      cfg.targets.empty() ? std::vector<int>{0} : cfg.targets;
  for (const AttackConfig& a : cfg.attacks) {
    for (int t : targets) {
      fs::path p = ScoreTablePath(cfg, a.id, t);
      std::error_code ec;
      if (fs::is_regular_file(p, ec)) paths.push_back(std::move(p));
    }
  }
  if (paths.empty()) {
    return MakeError(
        ErrorCode::kMissingArtifact,
        absl::StrCat("no score tables under ",
                     (fs::path(cfg.output_dir) / "scores").string()));
  }
  std::string hash;
  IHA_ASSIGN_OR_RETURN(std::vector<ScoreTable> tables,
                       LoadScoreTables(paths, &hash));
  if (hash != cfg.Hash()) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrCat("score tables carry config hash '", hash,
                                  "' but the config hashes to '", cfg.Hash(),
                                  "'"));
  }
  return EvaluateTables(tables, hash, cfg.agreement_q,
                        fs::path(cfg.output_dir) / "eval");
}

// ---------------------------------------------------------------------------
// dynamics verify

namespace {

double RelativeFrobenius(const Matrix& estimate, const Matrix& reference) {
  return (estimate - reference).norm() / reference.norm();
}

// Per-entry error |e_ij - r_ij| / sqrt(r_ii r_jj). On the diagonal this is
// the relative error; off the diagonal it bounds the correlation error,
// which stays defined when r_ij is zero.
double MaxEntryRelative(const Matrix& estimate, const Matrix& reference) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < reference.rows(); ++i) {
    for (Eigen::Index j = 0; j < reference.cols(); ++j) {
      const double scale =
          std::sqrt(std::abs(reference(i, i) * reference(j, j)));
      worst = std::max(worst,
                       std::abs(estimate(i, j) - reference(i, j)) / scale);
    }
  }
  return worst;
}

Json MatrixJson(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

absl::StatusOr<std::string> RunDynamicsVerification(
    const DynamicsVerifyOptions& options) {
  const ModelSpec spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  const std::vector<Record> records =
      TwoScaleRegressionRecords(options.records);
  Json report;
  report["records"] = options.records;
  report["batch_size"] = options.batch_size;
  report["learning_rate"] = options.learning_rate;
  bool all_pass = true;

  // Minibatch noise covariance at the unregularized minimum.
  {
    SgdConfig sgd;
    sgd.learning_rate = options.learning_rate;
    sgd.momentum = 0.0;
    sgd.weight_decay = 0.0;
    sgd.batch_size = options.batch_size;
    IHA_ASSIGN_OR_RETURN(const Vector w_star, LinearRidgeSolution(records, 0.0));
    IHA_ASSIGN_OR_RETURN(StationaryContext ctx,
                         BuildStationaryContext(spec, records, w_star, sgd));
    IHA_ASSIGN_OR_RETURN(SymMatrix theory, NoiseCovarianceTheory(ctx));
    IHA_ASSIGN_OR_RETURN(
        SymMatrix empirical,
        NoiseCovarianceEmpirical(spec, records, ParameterVector{w_star},
                                 options.batch_size, options.noise_trials,
                                 DeriveSeed(options.seed, 2)));
    const double err = RelativeFrobenius(empirical.matrix(), theory.matrix());
    const bool pass = err <= 0.10;
    all_pass = all_pass && pass;
    report["noise_covariance"] = {{"trials", options.noise_trials},
                                  {"theory", MatrixJson(theory.matrix())},
                                  {"empirical", MatrixJson(empirical.matrix())},
                                  {"relative_frobenius_error", err},
                                  {"tolerance", 0.10},
                                  {"pass", pass}};
  }

  // Stationary fluctuations under iid minibatch SGD.
  Json fluct = Json::array();
  for (double mu : {0.0, 0.9}) {
    for (double alpha : {0.0, 5e-4}) {
      SgdConfig sgd;
      sgd.learning_rate = options.learning_rate;
      sgd.momentum = mu;
      sgd.weight_decay = alpha;
      sgd.batch_size = options.batch_size;
      sgd.sampling = BatchSampling::kIid;
      sgd.seed = DeriveSeed(options.seed, 3);
      IHA_ASSIGN_OR_RETURN(const Vector w_star,
                           LinearRidgeSolution(records, alpha));
      IHA_ASSIGN_OR_RETURN(StationaryContext ctx,
                           BuildStationaryContext(spec, records, w_star, sgd));
      IHA_ASSIGN_OR_RETURN(SymMatrix theory, FluctuationTheory(ctx));
      IHA_ASSIGN_OR_RETURN(
          std::vector<ParameterVector> trajectory,
          CaptureTrajectory(spec, records, sgd, options.burn_in,
                            options.trajectory_samples, options.thin, w_star));
      IHA_ASSIGN_OR_RETURN(SymMatrix empirical,
                           FluctuationEmpirical(trajectory));
      const double err = MaxEntryRelative(empirical.matrix(), theory.matrix());
      const bool pass = err <= 0.10;
      all_pass = all_pass && pass;
      fluct.push_back({{"momentum", mu},
                       {"weight_decay", alpha},
                       {"samples", options.trajectory_samples},
                       {"thin", options.thin},
                       {"theory", MatrixJson(theory.matrix())},
                       {"empirical", MatrixJson(empirical.matrix())},
                       {"max_entry_relative_error", err},
                       {"tolerance", 0.10},
                       {"pass", pass}});
    }
  }
  report["fluctuation"] = fluct;

  // Log-posterior differences against the Gaussian with the stationary
  // covariance (alpha = 0).
  {
    SgdConfig sgd;
    sgd.learning_rate = options.learning_rate;
    sgd.momentum = 0.9;
    sgd.weight_decay = 0.0;
    sgd.batch_size = options.batch_size;
    IHA_ASSIGN_OR_RETURN(const Vector w_star, LinearRidgeSolution(records, 0.0));
    IHA_ASSIGN_OR_RETURN(StationaryContext ctx,
                         BuildStationaryContext(spec, records, w_star, sgd));
    IHA_ASSIGN_OR_RETURN(SymMatrix sigma, FluctuationTheory(ctx));
    const Matrix precision = sigma.matrix().inverse();
    const Eigen::LLT<Matrix> chol(sigma.matrix());
    const Matrix scale = chol.matrixL();
    CounterRng rng(DeriveSeed(options.seed, 4));
    auto draw = [&]() {
      Vector e(2);
      e << rng.NextGaussian(), rng.NextGaussian();
      return Vector(w_star + 2.0 * scale * e);
    };
    double worst = 0.0;
    for (int p = 0; p < options.posterior_pairs; ++p) {
      const Vector w1 = draw();
      const Vector w2 = draw();
      IHA_ASSIGN_OR_RETURN(double l1, LogPosterior(spec, records,
                                                   ParameterVector{w1}, ctx));
      IHA_ASSIGN_OR_RETURN(double l2, LogPosterior(spec, records,
                                                   ParameterVector{w2}, ctx));
      const Vector d1 = w1 - w_star;
      const Vector d2 = w2 - w_star;
      const double g = -0.5 * d1.dot(precision * d1) +
                       0.5 * d2.dot(precision * d2);
      worst = std::max(worst, std::abs((l1 - l2) - g));
    }
    const bool pass = worst <= 1e-9;
    all_pass = all_pass && pass;
    report["log_posterior"] = {{"pairs", options.posterior_pairs},
                               {"max_abs_difference_error", worst},
                               {"tolerance", 1e-9},
                               {"pass", pass}};
  }
  report["pass"] = all_pass;
  return report.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// run-all

absl::StatusOr<EvaluateReport> RunAll(const ExperimentConfig& cfg) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  IHA_RETURN_IF_ERROR(CmdTrain(cfg).status());
  const std::vector<int> targets =
      cfg.targets.empty() ? std::vector<int>{0} : cfg.targets;
  const bool needs_hessian = std::any_of(
      cfg.attacks.begin(), cfg.attacks.end(), [](const AttackConfig& a) {
        return (a.kind == AttackKind::kIha || a.kind == AttackKind::kSif) &&
               a.hessian_mode == HessianMode::kExactHessian;
      });
  if (needs_hessian) IHA_RETURN_IF_ERROR(CmdHessian(cfg, targets));
  for (const AttackConfig& a : cfg.attacks) {
    for (int t : targets) {
      IHA_RETURN_IF_ERROR(CmdAudit(cfg, a.id, t).status());
    }
  }
  return CmdEvaluate(cfg);
}

ExperimentConfig DefaultSyntheticConfig() {
  ExperimentConfig cfg;
  cfg.dataset.source = DatasetSource::kSynthetic;
  cfg.dataset.seed = 7;
  cfg.dataset.size = 600;
  cfg.dataset.feature_dim = 20;
  cfg.dataset.num_classes = 4;
  cfg.dataset.separation = 0.5;
  cfg.model = ModelSpec::Mlp(20, {12}, 4, LossKind::kCrossEntropy);
  cfg.sgd.learning_rate = 0.05;
  cfg.sgd.momentum = 0.9;
  cfg.sgd.weight_decay = 5e-4;
  cfg.sgd.batch_size = 32;
  cfg.sgd.epochs = 40;
  cfg.seed = 2026;
  cfg.num_models = 32;
  cfg.targets = {0, 1};

  AttackConfig loss;
  loss.kind = AttackKind::kLoss;
  AttackConfig sif;
  sif.kind = AttackKind::kSif;
  AttackConfig iha;
  iha.kind = AttackKind::kIha;
  AttackConfig iha_partial = iha;
  iha_partial.term_mask = {true, true, true, false, false};
  AttackConfig lira_on;
  lira_on.kind = AttackKind::kLira;
  AttackConfig lira_off = lira_on;
  lira_off.lira_mode = LiraMode::kOffline;
  AttackConfig lattack;
  lattack.kind = AttackKind::kLAttack;
  lattack.references = 4;
  lattack.max_candidates = 20;
  AttackConfig liral = lattack;
  liral.kind = AttackKind::kLiraL;
  for (AttackConfig a :
       {loss, sif, iha, iha_partial, lira_on, lira_off, lattack, liral}) {
    a.id = DefaultAttackId(a);
    cfg.attacks.push_back(a);
  }
  return cfg;
}

}  // namespace iha
