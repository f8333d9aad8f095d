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

#include "iha/attacks.h"

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "gtest/gtest.h"
#include "iha/data.h"
#include "iha/linalg.h"
#include "iha/model.h"
#include "iha/rng.h"
#include "iha/status.h"
#include "iha/training.h"
#include "test_util.h"

namespace iha {
namespace {

Vector Vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Record MakeRecord(std::initializer_list<double> x, double y) {
  Record r;
  r.features = Vector(static_cast<Eigen::Index>(x.size()));
  Eigen::Index i = 0;
  for (double v : x) r.features(i++) = v;
  r.label = y;
  return r;
}

// Hand-built exact-mode context for Linear(2, 1, squared error) at w = 0
// with a prescribed Hessian and training gradient. Members occupy dataset
// indices 0..n-1.
TargetContext HandContext(const SymMatrix& hessian, const Vector& grad_train,
                          std::size_t n) {
  TargetContext ctx;
  ctx.spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  ctx.w.values = Vector::Zero(2);
  ctx.mode = HessianMode::kExactHessian;
  ctx.hessian = *SymEigendecompose(hessian);
  ctx.grad_train = grad_train;
  for (std::size_t i = 0; i < n; ++i) {
    ctx.member_indices.push_back(i);
    ctx.members.push_back(MakeRecord({1.0, 0.0}, 0.0));
  }
  ctx.train_loss = 0.25;
  return ctx;
}

IhaConfig HandConfig(double lambda, double mu, double alpha, std::size_t n,
                     double epsilon) {
  IhaConfig cfg;
  cfg.lambda = lambda;
  cfg.mu = mu;
  cfg.alpha = alpha;
  cfg.n = n;
  cfg.conditioning = ConditioningPolicy::Damped(epsilon);
  return cfg;
}

struct TrainedTarget {
  ModelSpec spec;
  Dataset data;
  MembershipMask mask;
  ParameterVector w;
};

TrainedTarget SmallMlpTarget() {
  TrainedTarget t;
  t.spec = ModelSpec::Mlp(6, {5}, 3, LossKind::kCrossEntropy);
  t.data = *SynthTabular(21, 120, 6, 3, 0.8);
  t.mask = *BernoulliSplit(t.data, 0.5, 4);
  SgdConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum = 0.9;
  cfg.weight_decay = 5e-4;
  cfg.batch_size = 8;
  cfg.epochs = 30;
  cfg.seed = 2;
  t.w = *Train(t.spec, t.data, t.mask, cfg);
  return t;
}

TEST(LossAttackTest, NegatedLoss) {
  const ModelSpec spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  ParameterVector w;
  w.values = Vector::Zero(2);
  // f = 0, t = sqrt(0.7), loss 0.7.
  absl::StatusOr<double> s =
      LossAttack(spec, w, MakeRecord({1.0, 2.0}, std::sqrt(0.7)));
  ASSERT_TRUE(s.ok());
  EXPECT_NEAR(*s, -0.7, 1e-15);
}

TEST(SifTest, DiagonalExample) {
  const TargetContext ctx =
      HandContext(SymMatrix::Diagonal(Vec2(2.0, 4.0)),
                  Vector::Zero(2), 4);
  // Gradient 2 (f - t) x = (1, 0).
  absl::StatusOr<double> s = SifScore(MakeRecord({1.0, 0.0}, -0.5), ctx,
                                      ConditioningPolicy::Damped(0.0));
  ASSERT_TRUE(s.ok());
  EXPECT_NEAR(*s, 0.5, 1e-15);
  absl::StatusOr<double> zero = SifScore(MakeRecord({1.0, 0.0}, 0.0), ctx,
                                         ConditioningPolicy::Damped(0.0));
  ASSERT_TRUE(zero.ok());
  EXPECT_EQ(*zero, 0.0);
}

TEST(SifTest, MatchesDenseSolve) {
  CounterRng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix h = test::RandomSpd(2, 0.1, 10.0, rng);
    const TargetContext ctx =
        HandContext(*SymMatrix::FromFull(h), Vector::Zero(2), 3);
    const Record z =
        MakeRecord({rng.NextGaussian(), rng.NextGaussian()}, rng.NextGaussian());
    const Vector g = *Grad(ctx.spec, ctx.w, z);
    const double eps = 0.3;
    const Matrix shifted = h + eps * Matrix::Identity(2, 2);
    const double expected = g.dot(test::DenseSolve(shifted, g));
    absl::StatusOr<double> s =
        SifScore(z, ctx, ConditioningPolicy::Damped(eps));
    ASSERT_TRUE(s.ok());
    EXPECT_NEAR(*s, expected, 1e-8 * std::max(1.0, std::abs(expected)));
  }
}

TEST(SifTest, MissingHessian) {
  TargetContext ctx = HandContext(SymMatrix::Identity(2), Vector::Zero(2), 2);
  ctx.hessian.reset();
  EXPECT_TRUE(HasErrorCode(SifScore(MakeRecord({1.0, 0.0}, 1.0), ctx,
                                    ConditioningPolicy::Damped(0.1))
                               .status(),
                           ErrorCode::kMissingContext));
}

TEST(IhaTermsTest, SubstitutionExampleNonMember) {
  const TargetContext ctx =
      HandContext(SymMatrix::Identity(2), Vec2(0.05, 0.0), 10);
  const IhaConfig cfg = HandConfig(0.1, 0.9, 0.0, 10, 0.0);
  // Gradient 2 (0 + 0.1) (1, 0) = (0.2, 0); index 100 is not a member.
  absl::StatusOr<IhaTerms> t =
      ComputeIhaTerms(MakeRecord({1.0, 0.0}, -0.1), 100, ctx, cfg);
  ASSERT_TRUE(t.ok());
  EXPECT_NEAR(t->loss_value, 0.01, 1e-15);
  EXPECT_NEAR(t->i1, 0.004, 1e-15);
  EXPECT_NEAR(t->i2, 0.02, 1e-15);
  EXPECT_EQ(t->i3, 0.0);
  EXPECT_EQ(t->i4, 0.0);
}

TEST(IhaTermsTest, SubstitutionExampleMember) {
  const TargetContext ctx =
      HandContext(SymMatrix::Identity(2), Vec2(0.05, 0.0), 10);
  const IhaConfig cfg = HandConfig(0.1, 0.9, 0.0, 10, 0.0);
  // As a member the self contribution a / n = (0.02, 0) leaves the rest.
  absl::StatusOr<IhaTerms> t =
      ComputeIhaTerms(MakeRecord({1.0, 0.0}, -0.1), 3, ctx, cfg);
  ASSERT_TRUE(t.ok());
  EXPECT_NEAR(t->i1, 0.004, 1e-15);
  EXPECT_NEAR(t->i2, 2.0 * 0.03 * 0.2, 1e-15);
}

TEST(IhaTermsTest, MatchesDenseOracle) {
  CounterRng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix h = test::RandomSpd(2, 0.2, 5.0, rng);
    const Vector gt = test::RandomGaussianVector(2, rng);
    const std::size_t n = 7;
    const TargetContext ctx = HandContext(*SymMatrix::FromFull(h), gt, n);
    const double lambda = 0.05, mu = 0.8, alpha = 0.3, eps = 0.1;
    const IhaConfig cfg = HandConfig(lambda, mu, alpha, n, eps);
    const Record z =
        MakeRecord({rng.NextGaussian(), rng.NextGaussian()}, rng.NextGaussian());
    const Vector g = *Grad(ctx.spec, ctx.w, z);
    const bool member = trial % 2 == 0;
    const std::size_t index = member ? 2 : 50;

    const Matrix shifted = h + eps * Matrix::Identity(2, 2);
    const Vector a = test::DenseSolve(shifted, g);
    Vector b = test::DenseSolve(shifted, gt);
    if (member) b -= a / static_cast<double>(n);
    const Vector c = test::DenseSolve(shifted, a);
    const double kappa = lambda * alpha / (1.0 + mu);
    const double nd = static_cast<double>(n);
    const double i1 = (1.0 - kappa) * a.squaredNorm() / nd;
    const double i2 = 2.0 * (1.0 - kappa) * b.dot(a);
    const double i3 = alpha / (2.0 * nd) * (2.0 - kappa) * a.dot(c);
    const double i4 = alpha * (2.0 - kappa) * b.dot(c);

    absl::StatusOr<IhaTerms> t = ComputeIhaTerms(z, index, ctx, cfg);
    ASSERT_TRUE(t.ok());
    EXPECT_NEAR(t->i1, i1, 1e-10 * std::max(1.0, std::abs(i1)));
    EXPECT_NEAR(t->i2, i2, 1e-10 * std::max(1.0, std::abs(i2)));
    EXPECT_NEAR(t->i3, i3, 1e-10 * std::max(1.0, std::abs(i3)));
    EXPECT_NEAR(t->i4, i4, 1e-10 * std::max(1.0, std::abs(i4)));
  }
}

TEST(IhaTermsTest, CreateErrors) {
  TargetContext ctx = HandContext(SymMatrix::Identity(2), Vector::Zero(2), 5);
  EXPECT_TRUE(HasErrorCode(
      IhaScorer::Create(ctx, HandConfig(0.1, 0.9, 0.0, 6, 0.1)).status(),
      ErrorCode::kInvalidArgument));
  EXPECT_FALSE(IhaScorer::Create(ctx, HandConfig(0.0, 0.9, 0.0, 5, 0.1)).ok());
  ctx.hessian.reset();
  EXPECT_TRUE(HasErrorCode(
      IhaScorer::Create(ctx, HandConfig(0.1, 0.9, 0.0, 5, 0.1)).status(),
      ErrorCode::kMissingContext));
  ctx.mode = HessianMode::kHvpOnly;
  IhaConfig low_rank = HandConfig(0.1, 0.9, 0.0, 5, 0.1);
  low_rank.conditioning = ConditioningPolicy::LowRank(0.1);
  EXPECT_TRUE(HasErrorCode(IhaScorer::Create(ctx, low_rank).status(),
                           ErrorCode::kInvalidArgument));
}

TEST(IhaScoreTest, RawScoreExample) {
  IhaTerms t;
  t.loss_value = 0.57;
  t.i1 = 0.01;
  t.i2 = 0.03;
  IhaConfig cfg = HandConfig(1.0, 0.9, 0.0, 10, 0.1);
  absl::StatusOr<double> s = IhaScore(t, cfg, std::nullopt);
  ASSERT_TRUE(s.ok());
  EXPECT_NEAR(*s, 0.57 / 1.9 - 0.04, 1e-15);
  EXPECT_NEAR(*s, 0.26, 1e-15);

  cfg.term_mask = *ParseTermMask("i1");
  EXPECT_NEAR(*IhaScore(t, cfg, std::nullopt), -0.01, 1e-15);
  cfg.term_mask = *ParseTermMask("loss");
  EXPECT_NEAR(*IhaScore(t, cfg, std::nullopt), 0.3, 1e-15);
}

TEST(IhaScoreTest, SigmoidOutput) {
  IhaTerms t;
  t.loss_value = 0.57;
  t.i1 = 0.01;
  t.i2 = 0.03;
  IhaConfig cfg = HandConfig(1.0, 0.9, 0.0, 10, 0.1);
  cfg.output_mode = IhaOutputMode::kSigmoidProbability;
  cfg.batch_size = 32;
  EXPECT_TRUE(HasErrorCode(IhaScore(t, cfg, std::nullopt).status(),
                           ErrorCode::kMissingContext));
  EXPECT_TRUE(HasErrorCode(IhaScore(t, cfg, 0.0).status(),
                           ErrorCode::kMissingContext));
  // Scale 32 * 0.1 / (2 * 10 * 0.25) = 0.64.
  const double logit = 0.64 * 0.26;
  EXPECT_NEAR(*IhaScore(t, cfg, 0.25), 1.0 / (1.0 + std::exp(-logit)), 1e-14);
  cfg.gamma = 0.7;
  const double shifted = logit + std::log(0.7 / 0.3);
  EXPECT_NEAR(*IhaScore(t, cfg, 0.25), 1.0 / (1.0 + std::exp(-shifted)),
              1e-14);
}

TEST(IhaScoreTest, TermMaskParsing) {
  EXPECT_TRUE(ParseTermMask("all")->i4);
  const TermMask m = *ParseTermMask("i1,i2");
  EXPECT_FALSE(m.loss);
  EXPECT_TRUE(m.i1 && m.i2);
  EXPECT_FALSE(m.i3 || m.i4);
  EXPECT_EQ(ParseTermMask(m.ToString())->ToString(), m.ToString());
  EXPECT_FALSE(ParseTermMask("i5").ok());
}

TEST(IhaTrainedTest, ExactMatchesConjugateGradient) {
  const TrainedTarget t = SmallMlpTarget();
  absl::StatusOr<TargetContext> exact = PrepareTargetContext(
      t.spec, t.w, t.data, t.mask, HessianMode::kExactHessian);
  absl::StatusOr<TargetContext> cg = PrepareTargetContext(
      t.spec, t.w, t.data, t.mask, HessianMode::kHvpOnly);
  ASSERT_TRUE(exact.ok()) << exact.status();
  ASSERT_TRUE(cg.ok()) << cg.status();
  EXPECT_TRUE(exact->hessian.has_value());
  EXPECT_FALSE(cg->hessian.has_value());
  IhaConfig cfg;
  cfg.n = exact->n();
  cfg.alpha = 0.05;
  cfg.conditioning = ConditioningPolicy::Damped(1.0);
  absl::StatusOr<IhaScorer> se = IhaScorer::Create(*exact, cfg);
  absl::StatusOr<IhaScorer> sc = IhaScorer::Create(*cg, cfg);
  ASSERT_TRUE(se.ok()) << se.status();
  ASSERT_TRUE(sc.ok()) << sc.status();
  for (std::size_t i = 0; i < 20; ++i) {
    const IhaTerms a = *se->Terms(t.data.records[i], i);
    const IhaTerms b = *sc->Terms(t.data.records[i], i);
    EXPECT_TRUE(b.converged);
    EXPECT_GT(b.cg_iterations, 0);
    for (auto [x, y] : {std::pair{a.i1, b.i1}, std::pair{a.i2, b.i2},
                        std::pair{a.i3, b.i3}, std::pair{a.i4, b.i4}}) {
      EXPECT_NEAR(x, y, 1e-6 * std::max(1.0, std::abs(x))) << "record " << i;
    }
    EXPECT_EQ(a.loss_value, b.loss_value);
  }
}

TEST(IhaTrainedTest, PartialL0WithFullPoolMatchesExact) {
  const TrainedTarget t = SmallMlpTarget();
  const TargetContext ctx = *PrepareTargetContext(
      t.spec, t.w, t.data, t.mask, HessianMode::kExactHessian);
  IhaConfig full;
  full.n = ctx.n();
  full.conditioning = ConditioningPolicy::Damped(1.0);
  IhaConfig partial = full;
  // Rounds to the whole pool, so the estimate is the full average.
  partial.l0_fraction = 0.9999;
  const IhaScorer a = *IhaScorer::Create(ctx, full);
  const IhaScorer b = *IhaScorer::Create(ctx, partial);
  for (std::size_t i = 0; i < 30; ++i) {
    const IhaTerms x = *a.Terms(t.data.records[i], i);
    const IhaTerms y = *b.Terms(t.data.records[i], i);
    EXPECT_NEAR(x.i2, y.i2, 1e-10 * std::max(1.0, std::abs(x.i2)));
    EXPECT_NEAR(x.i4, y.i4, 1e-10 * std::max(1.0, std::abs(x.i4)));
    EXPECT_EQ(x.i1, y.i1);
    EXPECT_EQ(x.i3, y.i3);
  }
}

TEST(IhaTrainedTest, PartialL0IsSeededPerRecord) {
  const TrainedTarget t = SmallMlpTarget();
  const TargetContext ctx = *PrepareTargetContext(
      t.spec, t.w, t.data, t.mask, HessianMode::kExactHessian);
  IhaConfig cfg;
  cfg.n = ctx.n();
  cfg.conditioning = ConditioningPolicy::Damped(1.0);
  cfg.l0_fraction = 0.3;
  cfg.l0_seed = 77;
  const IhaScorer s = *IhaScorer::Create(ctx, cfg);
  const IhaTerms x = *s.Terms(t.data.records[5], 5);
  const IhaTerms y = *s.Terms(t.data.records[5], 5);
  EXPECT_EQ(x.i2, y.i2);
  cfg.l0_seed = 78;
  const IhaScorer other = *IhaScorer::Create(ctx, cfg);
  EXPECT_NE(other.Terms(t.data.records[5], 5)->i2, x.i2);
}

TEST(PrepareTargetContextTest, SingleMember) {
  Dataset data;
  data.feature_dim = 2;
  data.records = {MakeRecord({1.0, 0.0}, 1.0), MakeRecord({0.0, 1.0}, 2.0)};
  MembershipMask mask;
  mask.bits = {false, true};
  const ModelSpec spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  ParameterVector w;
  w.values = Vector::Zero(2);
  absl::StatusOr<TargetContext> ctx =
      PrepareTargetContext(spec, w, data, mask, HessianMode::kExactHessian);
  ASSERT_TRUE(ctx.ok());
  EXPECT_EQ(ctx->n(), 1u);
  EXPECT_EQ(ctx->member_indices, std::vector<std::size_t>{1});
  EXPECT_EQ(ctx->MemberSlot(1), std::optional<std::size_t>(0));
  EXPECT_FALSE(ctx->MemberSlot(0).has_value());
  EXPECT_NEAR(*ctx->train_loss, 4.0, 1e-15);
  EXPECT_NEAR(ctx->grad_train(1), -4.0, 1e-15);
  // Hessian 2 x x^T has eigenvalues 2 and 0.
  EXPECT_NEAR(ctx->hessian->eigenvalues(0), 2.0, 1e-12);
  EXPECT_NEAR(ctx->hessian->eigenvalues(1), 0.0, 1e-12);
}

TEST(PrepareTargetContextTest, Errors) {
  Dataset data;
  data.feature_dim = 2;
  data.records = {MakeRecord({1.0, 0.0}, 1.0), MakeRecord({0.0, 1.0}, 2.0)};
  const ModelSpec spec = ModelSpec::Linear(2, 1, LossKind::kSquaredError);
  ParameterVector w;
  w.values = Vector::Zero(2);
  MembershipMask none;
  none.bits = {false, false};
  EXPECT_TRUE(HasErrorCode(
      PrepareTargetContext(spec, w, data, none, HessianMode::kHvpOnly)
          .status(),
      ErrorCode::kEmptyDataset));
  MembershipMask short_mask;
  short_mask.bits = {true};
  EXPECT_TRUE(HasErrorCode(
      PrepareTargetContext(spec, w, data, short_mask, HessianMode::kHvpOnly)
          .status(),
      ErrorCode::kDimensionMismatch));
}

TEST(PrepareTargetContextTest, GradientVanishesAtQuadraticMinimum) {
  CounterRng rng(6);
  const ModelSpec spec = ModelSpec::Linear(3, 1, LossKind::kSquaredError);
  Dataset data;
  data.feature_dim = 3;
  data.records = test::RandomRecords(spec, 40, rng);
  MembershipMask mask;
  mask.bits.assign(40, true);
  Matrix xtx = Matrix::Zero(3, 3);
  Vector xty = Vector::Zero(3);
  for (const Record& r : data.records) {
    xtx += r.features * r.features.transpose();
    xty += r.label * r.features;
  }
  ParameterVector w;
  w.values = test::DenseSolve(xtx, xty);
  const TargetContext ctx =
      *PrepareTargetContext(spec, w, data, mask, HessianMode::kExactHessian);
  EXPECT_LT(ctx.grad_train.norm(), 1e-10);
  EXPECT_LT((ctx.hessian->Reconstruct() - 2.0 * xtx / 40.0).norm(), 1e-10);
}

TEST(LiraTest, OnlineExample) {
  // Means 1 and -1, unit sample variances.
  const std::vector<double> in = {0.0, 2.0, 1.0 + std::sqrt(0.5),
                                  1.0 - std::sqrt(0.5)};
  std::vector<double> out;
  for (double v : in) out.push_back(v - 2.0);
  // Sample variance of `in`: (1 + 1 + 0.5 + 0.5) / 3 = 1.
  absl::StatusOr<LiraResult> r = LiraScore(1.0, in, out, LiraMode::kOnline);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(r->score, 2.0, 1e-12);
  EXPECT_FALSE(r->variance_clamped);
}

TEST(LiraTest, OnlineIdenticalDistributionsScoreZero) {
  const std::vector<double> refs = {0.3, 0.9, 1.4, 0.2};
  for (double t : {-1.0, 0.0, 0.5, 3.0}) {
    EXPECT_EQ(LiraScore(t, refs, refs, LiraMode::kOnline)->score, 0.0);
  }
}

TEST(LiraTest, OfflineAtOutMeanIsHalf) {
  const std::vector<double> out = {1.0, 2.0, 3.0};
  EXPECT_NEAR(LiraScore(2.0, {}, out, LiraMode::kOffline)->score, 0.5, 1e-15);
  // Larger statistics look less like members.
  EXPECT_LT(LiraScore(3.0, {}, out, LiraMode::kOffline)->score, 0.5);
  EXPECT_GT(LiraScore(1.0, {}, out, LiraMode::kOffline)->score, 0.5);
}

TEST(LiraTest, OfflineMonotoneInStatistic) {
  const std::vector<double> out = {0.4, 0.7, 1.3, 0.9, 1.1};
  double prev = 2.0;
  for (double t = -2.0; t <= 4.0; t += 0.25) {
    const double s = LiraScore(t, {}, out, LiraMode::kOffline)->score;
    EXPECT_LE(s, prev);
    prev = s;
  }
}

TEST(LiraTest, VarianceClampIsReported) {
  const std::vector<double> flat = {1.0, 1.0, 1.0};
  absl::StatusOr<LiraResult> r = LiraScore(1.0, {}, flat, LiraMode::kOffline);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(r->variance_clamped);
  EXPECT_TRUE(std::isfinite(r->score));
}

TEST(LiraTest, Errors) {
  const std::vector<double> one = {1.0};
  const std::vector<double> two = {1.0, 2.0};
  EXPECT_TRUE(HasErrorCode(LiraScore(0.0, two, one, LiraMode::kOnline).status(),
                           ErrorCode::kInsufficientReferences));
  EXPECT_TRUE(HasErrorCode(LiraScore(0.0, one, two, LiraMode::kOnline).status(),
                           ErrorCode::kInsufficientReferences));
  EXPECT_TRUE(LiraScore(0.0, one, two, LiraMode::kOffline).ok());
  EXPECT_TRUE(HasErrorCode(
      LiraScore(std::numeric_limits<double>::quiet_NaN(), two, two,
                LiraMode::kOnline)
          .status(),
      ErrorCode::kNonFiniteInput));
}

TEST(LAttackTest, Examples) {
  const std::vector<double> refs = {1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(*LAttackScore(0.5, refs), 1.0);
  EXPECT_EQ(*LAttackScore(5.0, refs), 0.0);
  EXPECT_EQ(*LAttackScore(2.5, refs), 0.5);
  // A tie counts half.
  EXPECT_EQ(*LAttackScore(2.0, refs), 0.625);
  const std::vector<double> one = {1.0};
  EXPECT_TRUE(HasErrorCode(LAttackScore(0.0, one).status(),
                           ErrorCode::kInsufficientReferences));
}

TEST(LAttackTest, ShiftInvariant) {
  CounterRng rng(10);
  std::vector<double> refs(32);
  for (double& r : refs) r = rng.NextUnit();
  std::vector<double> shifted = refs;
  for (double& r : shifted) r += 7.0;
  for (int k = 0; k < 50; ++k) {
    const double t = rng.NextUnit();
    EXPECT_EQ(*LAttackScore(t, refs), *LAttackScore(t + 7.0, shifted));
  }
}

TEST(LiraLTest, IsOfflineLiraOnLosses) {
  const std::vector<double> refs = {0.2, 0.5, 0.4, 0.9};
  for (double t : {0.1, 0.45, 1.2}) {
    EXPECT_EQ(LiraLScore(t, refs)->score,
              LiraScore(t, {}, refs, LiraMode::kOffline)->score);
  }
}

TEST(RecordStatisticTest, LossAndConfidence) {
  const ModelSpec spec = ModelSpec::Mlp(3, {4}, 3, LossKind::kCrossEntropy);
  const ParameterVector w = InitParameters(spec, 5);
  const Record z = MakeRecord({0.1, -0.4, 0.7}, 2.0);
  EXPECT_EQ(*RecordStatistic(spec, w, z, LiraStatistic::kLoss),
            *Loss(spec, w, z));
  EXPECT_EQ(*RecordStatistic(spec, w, z, LiraStatistic::kLogitConfidence),
            -*LogitConfidence(spec, w, z));
}

}  // namespace
}  // namespace iha
