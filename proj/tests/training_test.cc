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

#include "iha/training.h"

#include <cmath>
#include <limits>
#include <vector>

#include "gtest/gtest.h"
#include "iha/data.h"
#include "iha/dynamics.h"
#include "iha/model.h"
#include "iha/rng.h"
#include "iha/status.h"
#include "test_util.h"

namespace iha {
namespace {

Vector Scalar(double x) { return Vector::Constant(1, x); }

SgdConfig Plain(double lr, double mu, double alpha, int batch, int epochs) {
  SgdConfig cfg;
  cfg.learning_rate = lr;
  cfg.momentum = mu;
  cfg.weight_decay = alpha;
  cfg.batch_size = batch;
  cfg.epochs = epochs;
  return cfg;
}

TEST(SgdStepTest, PlainSgd) {
  const SgdState s = SgdState::Start(Scalar(1.0));
  absl::StatusOr<SgdState> next =
      SgdStep(s, Scalar(2.0), Plain(0.1, 0.0, 0.0, 1, 1));
  ASSERT_TRUE(next.ok());
  EXPECT_DOUBLE_EQ(next->w(0), 0.8);
  EXPECT_DOUBLE_EQ(next->h(0), 2.0);
  EXPECT_EQ(next->step_count, 1);
}

TEST(SgdStepTest, MomentumArithmetic) {
  SgdState s = SgdState::Start(Scalar(3.0));
  s.h = Scalar(1.0);
  absl::StatusOr<SgdState> next =
      SgdStep(s, Scalar(2.0), Plain(0.1, 0.5, 0.0, 1, 1));
  ASSERT_TRUE(next.ok());
  EXPECT_DOUBLE_EQ(next->h(0), 2.5);
  EXPECT_DOUBLE_EQ(next->w(0), 3.0 - 0.25);
}

TEST(SgdStepTest, ZeroGradientIsAFixedPoint) {
  const SgdState s = SgdState::Start(Vector::LinSpaced(3, -1.0, 1.0));
  absl::StatusOr<SgdState> next =
      SgdStep(s, Vector::Zero(3), Plain(0.3, 0.9, 0.0, 1, 1));
  ASSERT_TRUE(next.ok());
  EXPECT_EQ(next->w, s.w);
  EXPECT_EQ(next->h, s.h);
  EXPECT_EQ(next->step_count, 1);
}

TEST(SgdStepTest, WithoutMomentumIsVanillaSgd) {
  CounterRng rng(3);
  SgdState s = SgdState::Start(test::RandomGaussianVector(5, rng));
  s.h = test::RandomGaussianVector(5, rng);
  const Vector g = test::RandomGaussianVector(5, rng);
  absl::StatusOr<SgdState> next = SgdStep(s, g, Plain(0.07, 0.0, 0.0, 1, 1));
  ASSERT_TRUE(next.ok());
  EXPECT_EQ(next->w, Vector(s.w - 0.07 * g));
}

TEST(SgdStepTest, Errors) {
  const SgdState s = SgdState::Start(Scalar(1.0));
  EXPECT_TRUE(HasErrorCode(
      SgdStep(s, Scalar(std::numeric_limits<double>::infinity()),
              Plain(0.1, 0.0, 0.0, 1, 1))
          .status(),
      ErrorCode::kDivergedNumerically));
  EXPECT_TRUE(HasErrorCode(
      SgdStep(s, Vector::Zero(2), Plain(0.1, 0.0, 0.0, 1, 1)).status(),
      ErrorCode::kDimensionMismatch));
  EXPECT_FALSE(Plain(0.0, 0.0, 0.0, 1, 1).Validate().ok());
  EXPECT_FALSE(Plain(0.1, 1.0, 0.0, 1, 1).Validate().ok());
  EXPECT_FALSE(Plain(0.1, 0.0, -1.0, 1, 1).Validate().ok());
  EXPECT_FALSE(Plain(0.1, 0.0, 0.0, 0, 1).Validate().ok());
}

TEST(TrainTest, ScalarQuadraticConverges) {
  // loss (w - 3)^2 from a single record x = 1, y = 3.
  const ModelSpec spec = ModelSpec::Linear(1, 1, LossKind::kSquaredError);
  Record z;
  z.features = Scalar(1.0);
  z.label = 3.0;
  absl::StatusOr<ParameterVector> w =
      TrainOnRecords(spec, {&z, 1}, Plain(0.1, 0.0, 0.0, 1, 200));
  ASSERT_TRUE(w.ok());
  EXPECT_NEAR(w->values(0), 3.0, 1e-6);
}

TEST(TrainTest, FullBatchDistanceDecreasesMonotonically) {
  const ModelSpec spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  const std::vector<Record> records = TwoScaleRegressionRecords(40);
  const Vector w_star = *LinearRidgeSolution(records, 0.0);
  // lambda * sigma_max = 0.05 * 30 < 2.
  const SgdConfig cfg = Plain(0.05, 0.0, 0.0, 40, 1);
  SgdState s = SgdState::Start(Vector::Constant(2, 5.0));
  double prev = (s.w - w_star).norm();
  for (int t = 0; t < 100; ++t) {
    const Vector g = DatasetLossGrad(spec, ParameterVector{s.w}, records)->grad;
    s = *SgdStep(s, g, cfg);
    const double d = (s.w - w_star).norm();
    if (t > 0) EXPECT_LT(d, prev) << "step " << t;
    prev = d;
  }
}

TEST(TrainTest, DeterministicAndBitIdentical) {
  absl::StatusOr<Dataset> data = SynthTabular(1, 200, 10, 3, 0.6);
  const ModelSpec spec = ModelSpec::Mlp(10, {8}, 3, LossKind::kCrossEntropy);
  const MembershipMask mask = *BernoulliSplit(*data, 0.5, 9);
  SgdConfig cfg = Plain(0.05, 0.9, 5e-4, 16, 5);
  cfg.seed = 11;
  absl::StatusOr<ParameterVector> a = Train(spec, *data, mask, cfg);
  absl::StatusOr<ParameterVector> b = Train(spec, *data, mask, cfg);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(SerializeParameters(spec, *a), SerializeParameters(spec, *b));
  cfg.seed = 12;
  EXPECT_NE(Train(spec, *data, mask, cfg)->values, a->values);
}

TEST(TrainTest, WeightDecayShrinksParameters) {
  absl::StatusOr<Dataset> data = SynthTabular(2, 300, 10, 3, 0.6);
  const ModelSpec spec = ModelSpec::Mlp(10, {8}, 3, LossKind::kCrossEntropy);
  const MembershipMask mask = *BernoulliSplit(*data, 0.5, 1);
  const SgdConfig free = Plain(0.05, 0.9, 0.0, 16, 10);
  const SgdConfig decayed = Plain(0.05, 0.9, 10.0, 16, 10);
  const double free_norm = Train(spec, *data, mask, free)->values.norm();
  const double decayed_norm = Train(spec, *data, mask, decayed)->values.norm();
  EXPECT_LT(decayed_norm, free_norm);
}

TEST(TrainTest, Errors) {
  absl::StatusOr<Dataset> data = SynthTabular(3, 20, 4, 2, 0.5);
  const ModelSpec spec = ModelSpec::Mlp(4, {3}, 2, LossKind::kCrossEntropy);
  const MembershipMask mask = *BernoulliSplit(*data, 0.5, 1);
  EXPECT_TRUE(HasErrorCode(
      Train(spec, *data, mask, Plain(0.1, 0.0, 0.0, 64, 1)).status(),
      ErrorCode::kInsufficientData));
  // A learning rate far past the stability limit blows up.
  const ModelSpec lin = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  const std::vector<Record> records = TwoScaleRegressionRecords(40);
  EXPECT_TRUE(HasErrorCode(
      TrainOnRecords(lin, records, Plain(1.0, 0.0, 0.0, 40, 200)).status(),
      ErrorCode::kDivergedNumerically));
}

TEST(TrajectoryTest, SnapshotCounts) {
  const ModelSpec spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  const std::vector<Record> records = TwoScaleRegressionRecords(40);
  const SgdConfig cfg = Plain(0.02, 0.0, 0.0, 8, 1);
  EXPECT_TRUE(CaptureTrajectory(spec, records, cfg, 10, 0, 1)->empty());
  EXPECT_EQ(CaptureTrajectory(spec, records, cfg, 10, 7, 1)->size(), 7u);
  EXPECT_EQ(CaptureTrajectory(spec, records, cfg, 0, 5, 3)->size(), 5u);
  EXPECT_FALSE(CaptureTrajectory(spec, records, cfg, 10, 5, 0).ok());
}

TEST(TrajectoryTest, StationaryMeanNearMinimum) {
  const ModelSpec spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  const std::vector<Record> records = TwoScaleRegressionRecords(400);
  const Vector w_star = *LinearRidgeSolution(records, 0.0);
  SgdConfig cfg = Plain(0.05, 0.0, 0.0, 10, 1);
  cfg.sampling = BatchSampling::kIid;
  cfg.seed = 5;
  constexpr int kSamples = 4000;
  absl::StatusOr<std::vector<ParameterVector>> traj =
      CaptureTrajectory(spec, records, cfg, 500, kSamples, 100, w_star);
  ASSERT_TRUE(traj.ok());
  Vector mean = Vector::Zero(2);
  for (const ParameterVector& p : *traj) mean += p.values;
  mean /= kSamples;
  Vector var = Vector::Zero(2);
  for (const ParameterVector& p : *traj) {
    var += (p.values - mean).cwiseAbs2();
  }
  var /= kSamples - 1;
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(mean(i) - w_star(i)),
              5.0 * std::sqrt(var(i) / kSamples))
        << "coordinate " << i;
  }
}

}  // namespace
}  // namespace iha
