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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "iha/io.h"
#include "iha/status.h"
#include "json.hpp"
#include "test_util.h"

namespace iha {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// Small synthetic experiment: 4 models on 120 records.
Json SmallConfigJson() {
  return Json::parse(R"({
    "seed": 5,
    "num_models": 4,
    "targets": [0, 1],
    "dataset": {"source": "synthetic", "seed": 2, "size": 120,
                "feature_dim": 6, "num_classes": 3, "separation": 0.8},
    "model": {"architecture": "mlp", "input_dim": 6, "hidden": [4],
              "output_dim": 3, "loss": "cross_entropy"},
    "sgd": {"learning_rate": 0.05, "momentum": 0.9, "weight_decay": 5e-4,
            "batch_size": 8, "epochs": 3},
    "attacks": [{"kind": "loss"}],
    "threads": 1
  })");
}

ExperimentConfig Parse(const Json& j, const fs::path& out) {
  absl::StatusOr<ExperimentConfig> cfg = ParseExperimentConfig(j.dump());
  EXPECT_TRUE(cfg.ok()) << cfg.status();
  cfg->output_dir = out.string();
  return *cfg;
}

std::string Slurp(const fs::path& p) { return *ReadFileBytes(p); }

TEST(ConfigTest, ParseDefaultsAndIds) {
  Json j = SmallConfigJson();
  j["attacks"] = Json::parse(R"([
    {"kind": "iha"}, {"kind": "iha", "mask": "i1,i2"},
    {"kind": "iha", "l0_fraction": 0.5}, {"kind": "lira"},
    {"kind": "sif", "hessian_mode": "cg"}])");
  absl::StatusOr<ExperimentConfig> cfg = ParseExperimentConfig(j.dump());
  ASSERT_TRUE(cfg.ok()) << cfg.status();
  EXPECT_EQ(cfg->num_models, 4);
  EXPECT_EQ(cfg->model.ParameterCount(), 6 * 4 + 4 + 4 * 3 + 3);
  ASSERT_EQ(cfg->attacks.size(), 5u);
  EXPECT_EQ(cfg->attacks[0].id, "iha");
  EXPECT_EQ(cfg->attacks[1].id, "iha_i1+i2");
  EXPECT_EQ(cfg->attacks[2].id, "iha_l0-0.5");
  EXPECT_EQ(cfg->attacks[3].id, "lira_online");
  EXPECT_EQ(cfg->attacks[4].id, "sif_cg");
  EXPECT_TRUE(cfg->Validate().ok());
}

TEST(ConfigTest, JsonRoundTripKeepsHash) {
  const ExperimentConfig cfg = Parse(SmallConfigJson(), "unused");
  absl::StatusOr<ExperimentConfig> back =
      ParseExperimentConfig(ExperimentConfigToJson(cfg));
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(back->Hash(), cfg.Hash());
  EXPECT_EQ(cfg.Hash().size(), 16u);
  // Runtime fields stay out of the hash.
  ExperimentConfig moved = cfg;
  moved.output_dir = "elsewhere";
  moved.threads = 3;
  EXPECT_EQ(moved.Hash(), cfg.Hash());
  moved.sgd.epochs = 4;
  EXPECT_NE(moved.Hash(), cfg.Hash());
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
  Json j = SmallConfigJson();
  j["unknown"] = 1;
  EXPECT_TRUE(HasErrorCode(ParseExperimentConfig(j.dump()).status(),
                           ErrorCode::kFormatError));
  j = SmallConfigJson();
  j["sgd"]["lr"] = 0.1;
  EXPECT_FALSE(ParseExperimentConfig(j.dump()).ok());
  EXPECT_FALSE(ParseExperimentConfig("{not json").ok());
  j = SmallConfigJson();
  j["attacks"] = Json::parse(R"([{"kind": "loss"}, {"kind": "loss"}])");
  EXPECT_FALSE(ParseExperimentConfig(j.dump()).ok());
  j = SmallConfigJson();
  j["targets"] = Json::array({7});
  EXPECT_FALSE(ParseExperimentConfig(j.dump()).ok());
}

TEST(TrainCommandTest, WritesArtifactsAndReuses) {
  test::ScopedTempDir dir;
  const ExperimentConfig cfg = Parse(SmallConfigJson(), dir.path());
  absl::StatusOr<TrainReport> first = CmdTrain(cfg);
  ASSERT_TRUE(first.ok()) << first.status();
  EXPECT_EQ(first->trained, (std::vector<int>{0, 1, 2, 3}));
  for (int i = 0; i < 4; ++i) {
    EXPECT_TRUE(fs::exists(ModelParamsPath(cfg, i)));
    EXPECT_TRUE(fs::exists(ModelMaskPath(cfg, i)));
  }
  const fs::path manifest = dir.path() / "manifest.json";
  const std::string before = Slurp(manifest);
  const Json m = Json::parse(before);
  EXPECT_EQ(m["config_hash"], cfg.Hash());
  EXPECT_EQ(m["models"].size(), 4u);

  absl::StatusOr<TrainReport> second = CmdTrain(cfg);
  ASSERT_TRUE(second.ok());
  EXPECT_TRUE(second->trained.empty());
  EXPECT_EQ(Slurp(manifest), before);

  // A damaged parameter file is retrained on its own.
  ASSERT_TRUE(WriteFileAtomic(ModelParamsPath(cfg, 2), "junk").ok());
  absl::StatusOr<TrainReport> third = CmdTrain(cfg);
  ASSERT_TRUE(third.ok()) << third.status();
  EXPECT_EQ(third->trained, std::vector<int>{2});
  EXPECT_EQ(Slurp(manifest), before);
}

TEST(TrainCommandTest, UnwritableOutputIsIoError) {
  test::ScopedTempDir dir;
  const fs::path blocker = dir.path() / "file";
  ASSERT_TRUE(WriteFileAtomic(blocker, "x").ok());
  const ExperimentConfig cfg = Parse(SmallConfigJson(), blocker / "out");
  EXPECT_TRUE(HasErrorCode(CmdTrain(cfg).status(), ErrorCode::kIoError));
}

TEST(AuditCommandTest, ScoresEveryRecordAndRecordsSeeds) {
  test::ScopedTempDir dir;
  Json j = SmallConfigJson();
  j["attacks"] = Json::parse(R"([
    {"kind": "loss"},
    {"kind": "iha", "l0_fraction": 0.5, "conditioning":
        {"mode": "damped", "epsilon": 1.0}}])");
  const ExperimentConfig cfg = Parse(j, dir.path());
  ASSERT_TRUE(CmdTrain(cfg).ok());
  absl::StatusOr<ScoreTable> loss = CmdAudit(cfg, "loss", 0);
  ASSERT_TRUE(loss.ok()) << loss.status();
  EXPECT_EQ(loss->rows.size(), 120u);
  EXPECT_TRUE(fs::exists(ScoreTablePath(cfg, "loss", 0)));

  const std::string id = cfg.attacks[1].id;
  absl::StatusOr<ScoreTable> iha = CmdAudit(cfg, id, 0);
  ASSERT_TRUE(iha.ok()) << iha.status();
  fs::path side = ScoreTablePath(cfg, id, 0);
  side.replace_extension(".json");
  const Json s = Json::parse(Slurp(side));
  EXPECT_EQ(s["l0_fraction"], 0.5);
  EXPECT_EQ(s["l0_subset_seeds"].size(), 120u);
  EXPECT_EQ(s["config_hash"], cfg.Hash());

  EXPECT_TRUE(HasErrorCode(CmdAudit(cfg, "nope", 0).status(),
                           ErrorCode::kInvalidArgument));
}

TEST(AuditCommandTest, LiraNeedsEnoughReferenceModels) {
  test::ScopedTempDir dir;
  Json j = SmallConfigJson();
  j["num_models"] = 3;
  j["targets"] = Json::array({0});
  j["attacks"] = Json::parse(R"([{"kind": "lira"}])");
  const ExperimentConfig cfg = Parse(j, dir.path());
  ASSERT_TRUE(CmdTrain(cfg).ok());
  EXPECT_TRUE(HasErrorCode(CmdAudit(cfg, "lira_online", 0).status(),
                           ErrorCode::kInsufficientReferences));
}

TEST(AuditCommandTest, MissingModelIsMissingArtifact) {
  test::ScopedTempDir dir;
  const ExperimentConfig cfg = Parse(SmallConfigJson(), dir.path());
  EXPECT_TRUE(HasErrorCode(CmdAudit(cfg, "loss", 0).status(),
                           ErrorCode::kMissingArtifact));
}

TEST(EvaluateTest, PerfectSeparationAndStd) {
  test::ScopedTempDir dir;
  std::vector<ScoreTable> tables;
  for (int target : {0, 1}) {
    ScoreTable t;
    t.attack_id = "oracle";
    t.target_model_id = target;
    for (std::size_t i = 0; i < 40; ++i) {
      const bool member = i % 2 == 0;
      t.rows.push_back({i, member ? 1.0 + i : -1.0 - i, member});
    }
    tables.push_back(t);
  }
  absl::StatusOr<EvaluateReport> r =
      EvaluateTables(tables, "feedface", 0.05, dir.path());
  ASSERT_TRUE(r.ok()) << r.status();
  const Json m = Json::parse(r->metrics_json);
  EXPECT_EQ(m["attacks"]["oracle"]["auc_mean"], 1.0);
  EXPECT_EQ(m["attacks"]["oracle"]["auc_std"], 0.0);
  EXPECT_EQ(m["attacks"]["oracle"]["tpr_at_1pct_fpr"], 1.0);
  EXPECT_TRUE(fs::exists(dir.path() / "roc_oracle_target1.csv"));
  EXPECT_TRUE(fs::exists(dir.path() / "agreement_target0.csv"));
  EXPECT_EQ(Slurp(dir.path() / "metrics.json"), r->metrics_json);
}

TEST(EvaluateTest, AblationBlocksAndRerunIsByteIdentical) {
  test::ScopedTempDir dir;
  Json j = SmallConfigJson();
  j["targets"] = Json::array({0});
  j["attacks"] = Json::parse(R"([
    {"kind": "iha", "mask": "i1"}, {"kind": "iha", "mask": "i2"},
    {"kind": "iha", "mask": "i1,i2"}, {"kind": "iha"}])");
  const ExperimentConfig cfg = Parse(j, dir.path());
  absl::StatusOr<EvaluateReport> first = RunAll(cfg);
  ASSERT_TRUE(first.ok()) << first.status();
  const Json m = Json::parse(first->metrics_json);
  for (const char* id : {"iha_i1", "iha_i2", "iha_i1+i2", "iha"}) {
    EXPECT_TRUE(m["attacks"].contains(id)) << id;
  }
  absl::StatusOr<EvaluateReport> again = CmdEvaluate(cfg);
  ASSERT_TRUE(again.ok());
  EXPECT_EQ(again->metrics_json, first->metrics_json);

  // Tables produced under another config are refused.
  ExperimentConfig changed = cfg;
  changed.seed = 6;
  EXPECT_TRUE(HasErrorCode(CmdEvaluate(changed).status(),
                           ErrorCode::kFormatError));
}

TEST(RunAllTest, DeterministicAcrossOutputDirectories) {
  test::ScopedTempDir a, b;
  Json j = SmallConfigJson();
  j["attacks"] = Json::parse(R"([{"kind": "loss"}, {"kind": "sif"}])");
  absl::StatusOr<EvaluateReport> ra = RunAll(Parse(j, a.path()));
  absl::StatusOr<EvaluateReport> rb = RunAll(Parse(j, b.path()));
  ASSERT_TRUE(ra.ok()) << ra.status();
  ASSERT_TRUE(rb.ok()) << rb.status();
  EXPECT_EQ(ra->metrics_json, rb->metrics_json);
  EXPECT_EQ(Slurp(a.path() / "scores" / "sif_target1.csv"),
            Slurp(b.path() / "scores" / "sif_target1.csv"));
}

}  // namespace
}  // namespace iha
