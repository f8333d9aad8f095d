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

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "absl/strings/ascii.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "iha/rng.h"
#include "iha/status.h"

namespace iha {
namespace {

struct GaussianFit {
  double mean = 0.0;
  double variance = 0.0;
  bool clamped = false;
};

GaussianFit Fit(std::span<const double> values) {
  GaussianFit fit;
  double sum = 0.0;
  for (double v : values) sum += v;
  fit.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - fit.mean) * (v - fit.mean);
  fit.variance = ss / static_cast<double>(values.size() - 1);
  if (!(fit.variance >= kLiraVarianceFloor)) {
    fit.variance = kLiraVarianceFloor;
    fit.clamped = true;
  }
  return fit;
}

double GaussianLogDensity(double x, const GaussianFit& fit) {
  const double d = x - fit.mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * fit.variance) -
         d * d / (2.0 * fit.variance);
}

absl::Status CheckFinite(absl::string_view what, std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) {
      return MakeError(ErrorCode::kNonFiniteInput,
                       absl::StrCat(what, " contains NaN or infinity"));
    }
  }
  return absl::OkStatus();
}

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string TermMask::ToString() const {
  std::vector<absl::string_view> parts;
  if (loss) parts.push_back("loss");
  if (i1) parts.push_back("i1");
  if (i2) parts.push_back("i2");
  if (i3) parts.push_back("i3");
  if (i4) parts.push_back("i4");
  return absl::StrJoin(parts, ",");
}

absl::StatusOr<TermMask> ParseTermMask(absl::string_view text) {
  const absl::string_view trimmed = absl::StripAsciiWhitespace(text);
  if (trimmed == "all") return TermMask::All();
  TermMask mask{false, false, false, false, false};
  for (absl::string_view raw : absl::StrSplit(trimmed, ',')) {
    const std::string part =
        absl::AsciiStrToLower(absl::StripAsciiWhitespace(raw));
    if (part == "loss") {
      mask.loss = true;
    } else if (part == "i1") {
      mask.i1 = true;
    } else if (part == "i2") {
      mask.i2 = true;
    } else if (part == "i3") {
      mask.i3 = true;
    } else if (part == "i4") {
      mask.i4 = true;
    } else {
      return MakeError(ErrorCode::kInvalidArgument,
                       absl::StrCat("unknown IHA term '", part, "'"));
    }
  }
  if (mask.empty()) {
    return MakeError(ErrorCode::kInvalidArgument, "term mask is empty");
  }
  return mask;
}

IhaConfig IhaConfig::FromSgd(const SgdConfig& cfg, std::size_t n) {
  IhaConfig out;
  out.lambda = cfg.learning_rate;
  out.mu = cfg.momentum;
  out.alpha = cfg.weight_decay;
  out.batch_size = cfg.batch_size;
  out.n = n;
  return out;
}

absl::Status IhaConfig::Validate() const {
  if (!(lambda > 0.0) || !(mu >= 0.0 && mu < 1.0) || !(alpha >= 0.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "need lambda > 0, mu in [0, 1) and alpha >= 0");
  }
  if (n == 0) {
    return MakeError(ErrorCode::kInvalidArgument, "member count n is zero");
  }
  if (batch_size < 1) {
    return MakeError(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument, "gamma must be in (0, 1)");
  }
  if (term_mask.empty()) {
    return MakeError(ErrorCode::kInvalidArgument, "term mask is empty");
  }
  if (!(l0_fraction > 0.0 && l0_fraction <= 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "l0_fraction must be in (0, 1]");
  }
  if (!(cg_tol > 0.0) || cg_max_iter < 1) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "cg tolerance must be > 0 and max_iter >= 1");
  }
  return conditioning.Validate();
}

std::optional<std::size_t> TargetContext::MemberSlot(std::size_t index) const {
  auto it = std::lower_bound(member_indices.begin(), member_indices.end(),
                             index);
  if (it == member_indices.end() || *it != index) return std::nullopt;
  return static_cast<std::size_t>(it - member_indices.begin());
}

LinearOperator TargetContext::HvpOperator() const {
  absl::StatusOr<ModelEvaluator> created = ModelEvaluator::Create(spec, w);
  if (!created.ok()) {
    const auto size = static_cast<Eigen::Index>(w.size());
    return [size](const Vector&) {
      return Vector::Constant(size, std::numeric_limits<double>::quiet_NaN());
    };
  }
  auto eval = std::make_shared<ModelEvaluator>(*std::move(created));
  const std::vector<Record>* records = &members;
  return [eval, records](const Vector& v) -> Vector {
    Matrix direction = v;
    Matrix out = Matrix::Zero(v.size(), 1);
    const double scale = 1.0 / static_cast<double>(records->size());
    for (const Record& z : *records) {
      if (!eval->AccumulateHvp(z, direction, scale, out).ok()) {
        return Vector::Constant(v.size(),
                                std::numeric_limits<double>::quiet_NaN());
      }
    }
    return out.col(0);
  };
}

absl::StatusOr<TargetContext> PrepareTargetContext(
    const ModelSpec& spec, const ParameterVector& w, const Dataset& dataset,
    const MembershipMask& mask, HessianMode mode,
    const HessianOptions& hessian_options,
    std::optional<EigenDecomposition> precomputed) {
  if (mask.size() != dataset.size()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "mask length differs from dataset size");
  }
  TargetContext ctx;
  ctx.spec = spec;
  ctx.w = w;
  ctx.mode = mode;
  ctx.member_indices = mask.Members();
  if (ctx.member_indices.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "target has no members");
  }
  ctx.members = SelectRecords(dataset, ctx.member_indices);
  IHA_ASSIGN_OR_RETURN(LossGrad lg, DatasetLossGrad(spec, w, ctx.members));
  ctx.grad_train = std::move(lg.grad);
  ctx.train_loss = lg.loss;
  if (mode == HessianMode::kExactHessian) {
    if (precomputed.has_value()) {
      if (static_cast<std::size_t>(precomputed->dim()) != w.size()) {
        return MakeError(ErrorCode::kDimensionMismatch,
                         "stored eigendecomposition has the wrong dimension");
      }
      ctx.hessian = std::move(*precomputed);
    } else {
      IHA_ASSIGN_OR_RETURN(
          SymMatrix h, ExactHessian(spec, w, ctx.members, hessian_options));
      IHA_ASSIGN_OR_RETURN(ctx.hessian, SymEigendecompose(h));
    }
  }
  return ctx;
}

absl::StatusOr<double> LossAttack(const ModelSpec& spec,
                                  const ParameterVector& w, const Record& z) {
  IHA_ASSIGN_OR_RETURN(double loss, Loss(spec, w, z));
  return -loss;
}

absl::StatusOr<double> SifScore(const Record& z, const TargetContext& ctx,
                                const ConditioningPolicy& policy,
                                double cg_tol, int cg_max_iter) {
  IHA_ASSIGN_OR_RETURN(Vector g, Grad(ctx.spec, ctx.w, z));
  if (ctx.mode == HessianMode::kExactHessian) {
    if (!ctx.hessian.has_value()) {
      return MakeError(ErrorCode::kMissingContext,
                       "exact mode context lacks a Hessian");
    }
    IHA_ASSIGN_OR_RETURN(Vector weights,
                         ConditionedInverseSpectrum(*ctx.hessian, policy));
    const Vector coords = ctx.hessian->eigenvectors.transpose() * g;
    return (coords.array().square() * weights.array()).sum();
  }
  if (policy.mode != ConditioningMode::kDamped) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "the conjugate-gradient path supports damped "
                     "conditioning only");
  }
  CgOptions options{policy.epsilon, cg_tol, cg_max_iter};
  IHA_ASSIGN_OR_RETURN(CgResult solved,
                       CgSolve(ctx.HvpOperator(), g, options));
  return g.dot(solved.x);
}

absl::StatusOr<IhaScorer> IhaScorer::Create(const TargetContext& ctx,
                                            const IhaConfig& cfg) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  if (cfg.n != ctx.n()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     absl::StrFormat("config n = %d but target has %d members",
                                     cfg.n, ctx.n()));
  }
  IhaScorer scorer(ctx, cfg);
  if (ctx.mode == HessianMode::kExactHessian) {
    if (!ctx.hessian.has_value()) {
      return MakeError(ErrorCode::kMissingContext,
                       "exact mode context lacks a Hessian");
    }
    IHA_ASSIGN_OR_RETURN(scorer.weights_, ConditionedInverseSpectrum(
                                              *ctx.hessian, cfg.conditioning));
    scorer.grad_train_eig_ =
        ctx.hessian->eigenvectors.transpose() * ctx.grad_train;
  } else {
    if (cfg.conditioning.mode != ConditioningMode::kDamped) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "the conjugate-gradient path supports damped "
                       "conditioning only");
    }
    IhaTerms scratch;
    IHA_ASSIGN_OR_RETURN(scorer.inv_grad_train_,
                         scorer.SolveCg(ctx.grad_train, scratch));
  }
  return scorer;
}

absl::StatusOr<Vector> IhaScorer::SolveCg(const Vector& rhs,
                                          IhaTerms& terms) const {
  CgOptions options{cfg_.conditioning.epsilon, cfg_.cg_tol, cfg_.cg_max_iter};
  IHA_ASSIGN_OR_RETURN(CgResult solved,
                       CgSolve(ctx_->HvpOperator(), rhs, options));
  terms.cg_iterations += solved.iterations;
  terms.converged = terms.converged && solved.converged;
  return std::move(solved.x);
}

absl::StatusOr<Vector> IhaScorer::PartialL0Grad(
    std::size_t index, std::optional<std::size_t> slot) const {
  const std::size_t n = ctx_->n();
  const std::size_t pool = slot.has_value() ? n - 1 : n;
  Vector out = Vector::Zero(static_cast<Eigen::Index>(ctx_->w.size()));
  if (pool == 0) return out;
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(cfg_.l0_fraction * static_cast<double>(pool))));
  CounterRng rng(DeriveSeed(cfg_.l0_seed, index));
  const std::vector<std::size_t> picks =
      SampleWithoutReplacement(pool, std::min(k, pool), rng);
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval,
                       ModelEvaluator::Create(ctx_->spec, ctx_->w));
  const double scale = static_cast<double>(pool) /
                       (static_cast<double>(n) *
                        static_cast<double>(picks.size()));
  for (std::size_t p : picks) {
    if (slot.has_value() && p >= *slot) ++p;
    IHA_RETURN_IF_ERROR(
        eval.AccumulateGrad(ctx_->members[p], scale, out).status());
  }
  return out;
}

absl::StatusOr<IhaTerms> IhaScorer::Terms(const Record& z,
                                          std::size_t index) const {
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval,
                       ModelEvaluator::Create(ctx_->spec, ctx_->w));
  Vector g = Vector::Zero(static_cast<Eigen::Index>(ctx_->w.size()));
  IhaTerms terms;
  IHA_ASSIGN_OR_RETURN(terms.loss_value, eval.AccumulateGrad(z, 1.0, g));

  const std::optional<std::size_t> slot = ctx_->MemberSlot(index);
  const double n = static_cast<double>(cfg_.n);
  const double kappa = cfg_.lambda * cfg_.alpha / (1.0 + cfg_.mu);
  const bool partial = cfg_.l0_fraction < 1.0;
  std::optional<Vector> l0_grad;
  if (partial) {
    IHA_ASSIGN_OR_RETURN(l0_grad, PartialL0Grad(index, slot));
  }

  double aa, ba, ac, bc;
  if (ctx_->mode == HessianMode::kExactHessian) {
    const Matrix& u = ctx_->hessian->eigenvectors;
    const Vector a = weights_.cwiseProduct(u.transpose() * g);
    Vector b;
    if (partial) {
      b = weights_.cwiseProduct(u.transpose() * *l0_grad);
    } else {
      b = weights_.cwiseProduct(grad_train_eig_);
      if (slot.has_value()) b -= a / n;
    }
    const Vector wa = weights_.cwiseProduct(a);
    aa = a.squaredNorm();
    ba = b.dot(a);
    ac = a.dot(wa);
    bc = b.dot(wa);
  } else {
    IHA_ASSIGN_OR_RETURN(Vector a, SolveCg(g, terms));
    Vector b;
    if (partial) {
      IHA_ASSIGN_OR_RETURN(b, SolveCg(*l0_grad, terms));
    } else {
      b = inv_grad_train_;
      if (slot.has_value()) b -= a / n;
    }
    aa = a.squaredNorm();
    ba = b.dot(a);
    ac = 0.0;
    bc = 0.0;
    if (cfg_.alpha != 0.0) {
      IHA_ASSIGN_OR_RETURN(Vector c, SolveCg(a, terms));
      ac = a.dot(c);
      bc = b.dot(c);
    }
  }
  terms.i1 = (1.0 / n) * (1.0 - kappa) * aa;
  terms.i2 = 2.0 * (1.0 - kappa) * ba;
  terms.i3 = (cfg_.alpha / (2.0 * n)) * (2.0 - kappa) * ac;
  terms.i4 = cfg_.alpha * (2.0 - kappa) * bc;
  return terms;
}

absl::StatusOr<double> IhaScorer::Score(const IhaTerms& terms) const {
  return IhaScore(terms, cfg_, ctx_->train_loss);
}

absl::StatusOr<IhaTerms> ComputeIhaTerms(const Record& z, std::size_t index,
                                         const TargetContext& ctx,
                                         const IhaConfig& cfg) {
  IHA_ASSIGN_OR_RETURN(IhaScorer scorer, IhaScorer::Create(ctx, cfg));
  return scorer.Terms(z, index);
}

absl::StatusOr<double> IhaScore(const IhaTerms& terms, const IhaConfig& cfg,
                                std::optional<double> l_star) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  const TermMask& m = cfg.term_mask;
  double sum = 0.0;
  if (m.i1) sum += terms.i1;
  if (m.i2) sum += terms.i2;
  if (m.i3) sum += terms.i3;
  if (m.i4) sum += terms.i4;
  double raw = -sum / cfg.lambda;
  if (m.loss) raw += terms.loss_value / (1.0 + cfg.mu);
  if (cfg.output_mode == IhaOutputMode::kRawScore) return raw;
  if (!l_star.has_value() || !(*l_star > 0.0)) {
    return MakeError(ErrorCode::kMissingContext,
                     "sigmoid output needs a positive L* estimate");
  }
  const double scale = cfg.batch_size * (1.0 - cfg.mu) /
                       (2.0 * static_cast<double>(cfg.n) * *l_star);
  return Sigmoid(scale * raw + std::log(cfg.gamma / (1.0 - cfg.gamma)));
}

absl::StatusOr<LiraResult> LiraScore(double target_stat,
                                     std::span<const double> in_stats,
                                     std::span<const double> out_stats,
                                     LiraMode mode) {
  if (out_stats.size() < 2 ||
      (mode == LiraMode::kOnline && in_stats.size() < 2)) {
    return MakeError(
        ErrorCode::kInsufficientReferences,
        absl::StrFormat("%d in / %d out reference statistics; need at least "
                        "2 of each used",
                        in_stats.size(), out_stats.size()));
  }
  if (!std::isfinite(target_stat)) {
    return MakeError(ErrorCode::kNonFiniteInput, "target statistic not finite");
  }
  IHA_RETURN_IF_ERROR(CheckFinite("out statistics", out_stats));
  const GaussianFit out = Fit(out_stats);
  LiraResult result;
  if (mode == LiraMode::kOffline) {
    const double z = (target_stat - out.mean) / std::sqrt(out.variance);
    result.score = 0.5 * std::erfc(z / std::numbers::sqrt2);
    result.variance_clamped = out.clamped;
    return result;
  }
  IHA_RETURN_IF_ERROR(CheckFinite("in statistics", in_stats));
  const GaussianFit in = Fit(in_stats);
  result.score =
      GaussianLogDensity(target_stat, in) - GaussianLogDensity(target_stat, out);
  result.variance_clamped = in.clamped || out.clamped;
  return result;
}

absl::StatusOr<double> LAttackScore(double target_loss,
                                    std::span<const double> ref_losses) {
  if (ref_losses.size() < 2) {
    return MakeError(ErrorCode::kInsufficientReferences,
                     absl::StrFormat("%d reference losses, need at least 2",
                                     ref_losses.size()));
  }
  IHA_RETURN_IF_ERROR(CheckFinite("reference losses", ref_losses));
  double count = 0.0;
  for (double ref : ref_losses) {
    if (ref > target_loss) {
      count += 1.0;
    } else if (ref == target_loss) {
      count += 0.5;
    }
  }
  return count / static_cast<double>(ref_losses.size());
}

absl::StatusOr<LiraResult> LiraLScore(double target_loss,
                                      std::span<const double> ref_losses) {
  return LiraScore(target_loss, {}, ref_losses, LiraMode::kOffline);
}

absl::StatusOr<double> RecordStatistic(const ModelSpec& spec,
                                       const ParameterVector& w,
                                       const Record& z, LiraStatistic stat) {
  if (stat == LiraStatistic::kLoss) return Loss(spec, w, z);
  IHA_ASSIGN_OR_RETURN(double confidence, LogitConfidence(spec, w, z));
  return -confidence;
}

}  // namespace iha
