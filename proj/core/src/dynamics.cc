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

#include "iha/dynamics.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/str_format.h"
#include "iha/rng.h"
#include "iha/status.h"

namespace iha {
namespace {

// Fails unless 2 - k (s_i + alpha) > 0 for every eigenvalue s_i.
absl::Status CheckStable(const StationaryContext& ctx) {
  const double k = ctx.cfg.learning_rate / (1.0 + ctx.cfg.momentum);
  const Vector& sigma = ctx.hessian.eigenvalues;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    const double margin = 2.0 - k * (sigma(i) + ctx.cfg.weight_decay);
    if (!(margin > 0.0)) {
      return MakeError(
          ErrorCode::kUnstableRegime,
          absl::StrFormat("2 - k (sigma_%d + alpha) = %g <= 0 with sigma = %g",
                          i + 1, margin, sigma(i)));
    }
  }
  return absl::OkStatus();
}

// Conditioned inverse weights of H* + alpha I.
absl::StatusOr<Vector> ShiftedInverseWeights(const StationaryContext& ctx) {
  EigenDecomposition shifted;
  shifted.eigenvalues =
      ctx.hessian.eigenvalues.array() + ctx.cfg.weight_decay;
  return ConditionedInverseSpectrum(shifted, ctx.conditioning);
}

Matrix FromSpectrum(const EigenDecomposition& decomp, const Vector& weights) {
  return decomp.eigenvectors * weights.asDiagonal() *
         decomp.eigenvectors.transpose();
}

}  // namespace

absl::Status StationaryContext::Validate() const {
  if (!(l_star >= 0.0) || !std::isfinite(l_star)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "L* must be finite and nonnegative");
  }
  if (hessian.dim() == 0 || hessian.dim() != w_star.size() ||
      hessian.eigenvectors.rows() != w_star.size()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "Hessian dimension differs from parameter count");
  }
  if (n == 0) {
    return MakeError(ErrorCode::kEmptyDataset, "training-set size is zero");
  }
  IHA_RETURN_IF_ERROR(conditioning.Validate());
  return cfg.Validate();
}

absl::StatusOr<StationaryContext> BuildStationaryContext(
    const ModelSpec& spec, std::span<const Record> records,
    const Vector& w_star, const SgdConfig& cfg,
    const ConditioningPolicy& conditioning) {
  const ParameterVector w{w_star};
  IHA_ASSIGN_OR_RETURN(LossGrad lg, DatasetLossGrad(spec, w, records));
  IHA_ASSIGN_OR_RETURN(SymMatrix h, ExactHessian(spec, w, records));
  StationaryContext ctx;
  ctx.w_star = w_star;
  ctx.l_star = lg.loss;
  IHA_ASSIGN_OR_RETURN(ctx.hessian, SymEigendecompose(h));
  ctx.cfg = cfg;
  ctx.n = records.size();
  ctx.conditioning = conditioning;
  IHA_RETURN_IF_ERROR(ctx.Validate());
  return ctx;
}

absl::StatusOr<SymMatrix> NoiseCovarianceTheory(const StationaryContext& ctx) {
  IHA_RETURN_IF_ERROR(ctx.Validate());
  const double s = ctx.cfg.batch_size;
  const double alpha = ctx.cfg.weight_decay;
  const Matrix h = ctx.hessian.Reconstruct();
  Matrix c = (2.0 * ctx.l_star / s) * h;
  if (alpha != 0.0) {
    c.noalias() -= (alpha * alpha / s) * (ctx.w_star * ctx.w_star.transpose());
  }
  return SymMatrix::Symmetrized(c);
}

absl::StatusOr<SymMatrix> NoiseCovarianceEmpirical(
    const ModelSpec& spec, std::span<const Record> records,
    const ParameterVector& w, int batch_size, std::int64_t trials,
    std::uint64_t seed) {
  if (trials < 2) {
    return MakeError(ErrorCode::kInvalidArgument, "need at least two trials");
  }
  if (records.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "no records");
  }
  if (batch_size < 1 || static_cast<std::size_t>(batch_size) > records.size()) {
    return MakeError(ErrorCode::kInvalidBatch,
                     absl::StrFormat("batch size %d not in [1, %d]",
                                     batch_size, records.size()));
  }
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  const auto p = static_cast<Eigen::Index>(w.size());
  const auto n = static_cast<Eigen::Index>(records.size());
  if (static_cast<std::size_t>(batch_size) == records.size()) {
    return SymMatrix::Zero(static_cast<int>(p));
  }
  // Per-record gradients as columns, centred on the full mean.
  Matrix grads = Matrix::Zero(p, n);
  Vector column(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    column.setZero();
    IHA_RETURN_IF_ERROR(eval.AccumulateGrad(records[i], 1.0, column).status());
    grads.col(i) = column;
  }
  const Vector mean = grads.rowwise().mean();
  grads.colwise() -= mean;

  Vector eta(p);
  Vector sum = Vector::Zero(p);
  Matrix outer = Matrix::Zero(p, p);
  const double inv_s = 1.0 / batch_size;
  for (std::int64_t t = 0; t < trials; ++t) {
    CounterRng rng(DeriveSeed(seed, static_cast<std::uint64_t>(t)));
    eta.setZero();
    for (int b = 0; b < batch_size; ++b) {
      eta += grads.col(static_cast<Eigen::Index>(rng.NextBelow(n)));
    }
    eta *= inv_s;
    sum += eta;
    outer.selfadjointView<Eigen::Lower>().rankUpdate(eta);
  }
  const double count = static_cast<double>(trials);
  const Vector eta_mean = sum / count;
  Matrix cov = outer.selfadjointView<Eigen::Lower>();
  cov.noalias() -= count * eta_mean * eta_mean.transpose();
  cov /= (count - 1.0);
  return SymMatrix::Symmetrized(cov);
}

absl::StatusOr<SymMatrix> FluctuationTheory(const StationaryContext& ctx) {
  IHA_RETURN_IF_ERROR(ctx.Validate());
  IHA_RETURN_IF_ERROR(CheckStable(ctx));
  const double lambda = ctx.cfg.learning_rate;
  const double mu = ctx.cfg.momentum;
  const double alpha = ctx.cfg.weight_decay;
  const double s = ctx.cfg.batch_size;
  const double k = lambda / (1.0 + mu);
  IHA_ASSIGN_OR_RETURN(Vector weights, ShiftedInverseWeights(ctx));
  const Vector& sigma = ctx.hessian.eigenvalues;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    weights(i) /= 2.0 - k * (sigma(i) + alpha);
  }
  Matrix b = (2.0 * ctx.l_star) * ctx.hessian.Reconstruct();
  if (alpha != 0.0) {
    b.noalias() -= (alpha * alpha) * (ctx.w_star * ctx.w_star.transpose());
  }
  const Matrix sigma_matrix =
      (lambda / (s * (1.0 - mu))) * (b * FromSpectrum(ctx.hessian, weights));
  return SymMatrix::Symmetrized(sigma_matrix);
}

absl::StatusOr<SymMatrix> FluctuationFromNoise(const StationaryContext& ctx,
                                               const SymMatrix& noise) {
  IHA_RETURN_IF_ERROR(ctx.Validate());
  IHA_RETURN_IF_ERROR(CheckStable(ctx));
  if (noise.dim() != ctx.hessian.dim()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "noise covariance dimension differs from Hessian");
  }
  const double lambda = ctx.cfg.learning_rate;
  const double mu = ctx.cfg.momentum;
  const double alpha = ctx.cfg.weight_decay;
  const double k = lambda / (1.0 + mu);
  IHA_ASSIGN_OR_RETURN(Vector weights, ShiftedInverseWeights(ctx));
  const Vector& sigma = ctx.hessian.eigenvalues;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    weights(i) /= k * (2.0 - k * (sigma(i) + alpha));
  }
  const Matrix out = FromSpectrum(ctx.hessian, weights) *
                     ((lambda * lambda / (1.0 - mu * mu)) * noise.matrix());
  return SymMatrix::Symmetrized(out);
}

absl::StatusOr<SymMatrix> FluctuationEmpirical(
    std::span<const ParameterVector> trajectory) {
  if (trajectory.size() < 2) {
    return MakeError(ErrorCode::kInsufficientSamples,
                     absl::StrFormat("%d snapshots, need at least 2",
                                     trajectory.size()));
  }
  const Eigen::Index p = trajectory.front().values.size();
  Vector mean = Vector::Zero(p);
  for (const ParameterVector& w : trajectory) {
    if (w.values.size() != p) {
      return MakeError(ErrorCode::kDimensionMismatch,
                       "snapshots differ in length");
    }
    mean += w.values;
  }
  mean /= static_cast<double>(trajectory.size());
  Matrix cov = Matrix::Zero(p, p);
  Vector centred(p);
  for (const ParameterVector& w : trajectory) {
    centred = w.values - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centred);
  }
  Matrix full = cov.selfadjointView<Eigen::Lower>();
  full /= static_cast<double>(trajectory.size() - 1);
  return SymMatrix::Symmetrized(full);
}

absl::StatusOr<double> LogPosterior(const Vector& w, double loss_at_w,
                                    const Vector& grad_at_w,
                                    const StationaryContext& ctx) {
  IHA_RETURN_IF_ERROR(ctx.Validate());
  if (!(ctx.l_star > 0.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "log-posterior needs L* > 0");
  }
  if (w.size() != ctx.w_star.size() || grad_at_w.size() != w.size()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "parameter or gradient length differs from w*");
  }
  IHA_RETURN_IF_ERROR(CheckStable(ctx));
  const double lambda = ctx.cfg.learning_rate;
  const double mu = ctx.cfg.momentum;
  const double alpha = ctx.cfg.weight_decay;
  const double s = ctx.cfg.batch_size;
  const double k = lambda / (1.0 + mu);
  const double kappa = lambda * alpha / (1.0 + mu);
  const double d = static_cast<double>(w.size());

  double spectral = 0.0;
  const Vector& sigma = ctx.hessian.eigenvalues;
  const double eps = ctx.conditioning.epsilon;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    double eff = sigma(i);
    if (ctx.conditioning.mode == ConditioningMode::kDamped) {
      eff += eps;
    } else if (!(sigma(i) > eps)) {
      continue;
    }
    if (!(eff > 0.0)) {
      return MakeError(ErrorCode::kIllConditioned,
                       absl::StrFormat("effective eigenvalue %g is not "
                                       "positive",
                                       eff));
    }
    spectral += std::log((2.0 - k * (eff + alpha)) * (eff + alpha) / eff);
  }

  const double scale = s * (1.0 - mu);
  double out = -0.5 * d * std::log(ctx.l_star) + spectral;
  out -= scale / (2.0 * lambda) * (1.0 - kappa) *
         (w - ctx.w_star).squaredNorm() / ctx.l_star;
  if (alpha != 0.0) {
    Vector v = grad_at_w;
    for (int rep = 0; rep < 3; ++rep) {
      IHA_ASSIGN_OR_RETURN(
          v, ConditionedInverseApply(ctx.hessian, ctx.conditioning, v));
    }
    out -= scale * alpha / (4.0 * lambda) * (2.0 - kappa) *
           grad_at_w.dot(v) / ctx.l_star;
  }
  out += scale / (2.0 * (1.0 + mu)) * loss_at_w / ctx.l_star;
  return out;
}

absl::StatusOr<double> LogPosterior(const ModelSpec& spec,
                                    std::span<const Record> records,
                                    const ParameterVector& w,
                                    const StationaryContext& ctx) {
  IHA_ASSIGN_OR_RETURN(LossGrad lg, DatasetLossGrad(spec, w, records));
  return LogPosterior(w.values, lg.loss, lg.grad, ctx);
}

double QuadraticObjective::Value(const Vector& w) const {
  const Vector delta = w - w_star;
  return l_star + 0.5 * delta.dot(hessian * delta);
}

Vector QuadraticObjective::Gradient(const Vector& w) const {
  return hessian * (w - w_star);
}

std::vector<Record> TwoScaleRegressionRecords(std::size_t n) {
  const double c = std::sqrt(0.5);
  Vector stiff(2);
  stiff << c, c;
  Vector soft(2);
  soft << -c, c;
  Vector w_true(2);
  w_true << 0.7, -0.3;
  constexpr double kNoise = 0.5;
  constexpr double kStiffShare = 0.9;
  const std::size_t groups = std::max<std::size_t>(n / 4, 2);
  const auto stiff_groups = static_cast<std::size_t>(
      std::llround(kStiffShare * static_cast<double>(groups)));
  std::vector<Record> out;
  out.reserve(4 * groups);
  for (std::size_t g = 0; g < groups; ++g) {
    // Eigenvalue sigma = 2 * share * |x|^2.
    const Vector x = g < stiff_groups
                         ? Vector(std::sqrt(30.0 / (2.0 * kStiffShare)) * stiff)
                         : Vector(std::sqrt(0.5 / (2.0 * (1.0 - kStiffShare))) *
                                  soft);
    for (double sx : {1.0, -1.0}) {
      for (double se : {1.0, -1.0}) {
        Record r;
        r.features = sx * x;
        r.label = r.features.dot(w_true) + se * kNoise;
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

absl::StatusOr<Vector> LinearRidgeSolution(std::span<const Record> records,
                                           double alpha) {
  if (records.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "no records");
  }
  const Eigen::Index d = records.front().features.size();
  Matrix a = Matrix::Zero(d, d);
  Vector b = Vector::Zero(d);
  for (const Record& r : records) {
    if (r.features.size() != d) {
      return MakeError(ErrorCode::kDimensionMismatch,
                       "records have different feature sizes");
    }
    a.noalias() += 2.0 * r.features * r.features.transpose();
    b += 2.0 * r.label * r.features;
  }
  const double n = static_cast<double>(records.size());
  a /= n;
  b /= n;
  a += alpha * Matrix::Identity(d, d);
  const Eigen::LDLT<Matrix> ldlt(a);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    return MakeError(ErrorCode::kIllConditioned,
                     "normal equations are not positive definite");
  }
  return Vector(ldlt.solve(b));
}

}  // namespace iha
