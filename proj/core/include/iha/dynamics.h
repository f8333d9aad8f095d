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

// Stationary behaviour of momentum SGD near a minimum w* with loss L* and
// Hessian H*: the minibatch noise covariance, the stationary fluctuation of
// the iterates and the resulting log-posterior over parameters, together
// with Monte-Carlo estimators for the first two.
//
// Notation: lambda learning rate, mu momentum, alpha weight decay, S batch
// size, k = lambda / (1 + mu).

#ifndef IHA_DYNAMICS_H_
#define IHA_DYNAMICS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "iha/linalg.h"
#include "iha/model.h"
#include "iha/training.h"

namespace iha {

struct StationaryContext {
  Vector w_star;
  double l_star = 0.0;
  EigenDecomposition hessian;
  SgdConfig cfg;
  std::size_t n = 0;
  // Governs every inverse of H* (or H* + alpha I) taken below.
  ConditioningPolicy conditioning = ConditioningPolicy::Damped(0.0);

  absl::Status Validate() const;
};

// Evaluates L*, H* and n on `records` at `w_star`.
absl::StatusOr<StationaryContext> BuildStationaryContext(
    const ModelSpec& spec, std::span<const Record> records,
    const Vector& w_star, const SgdConfig& cfg,
    const ConditioningPolicy& conditioning = ConditioningPolicy::Damped(0.0));

// C = (2 L* / S) H* - (alpha^2 / S) w* w*^T.
absl::StatusOr<SymMatrix> NoiseCovarianceTheory(const StationaryContext& ctx);

// Sample covariance of eta = (batch mean gradient) - (full mean gradient)
// over `trials` batches of size S drawn uniformly with replacement. When
// S == n the batch is the whole set and eta is identically zero. Trial t
// uses its own stream DeriveSeed(seed, t).
absl::StatusOr<SymMatrix> NoiseCovarianceEmpirical(
    const ModelSpec& spec, std::span<const Record> records,
    const ParameterVector& w, int batch_size, std::int64_t trials,
    std::uint64_t seed);

// Sigma = lambda / (S (1 - mu)) (2 L* H* - alpha^2 w* w*^T)
//         (H* + alpha I)^-1 (2 I - k (H* + alpha I))^-1,
// returned symmetrized since the alpha^2 term does not commute with H*.
absl::StatusOr<SymMatrix> FluctuationTheory(const StationaryContext& ctx);

// General stationary covariance for a given noise covariance C:
// Sigma = [k (H* + alpha I)(2 I - k (H* + alpha I))]^-1 lambda^2 C / (1 - mu^2).
absl::StatusOr<SymMatrix> FluctuationFromNoise(const StationaryContext& ctx,
                                               const SymMatrix& noise);

// Unbiased sample covariance of the snapshots.
absl::StatusOr<SymMatrix> FluctuationEmpirical(
    std::span<const ParameterVector> trajectory);

// Log-posterior of w up to additive constants, given L(w) and grad L(w):
//   - (d/2) ln L*
//   + sum_i ln((2 - k (s_i + alpha)) (s_i + alpha) / s_i)
//   - S (1 - mu) / (2 lambda) (1 - lambda alpha / (1 + mu)) |w - w*|^2 / L*
//   - S (1 - mu) alpha / (4 lambda) (2 - lambda alpha / (1 + mu))
//       grad^T H*^-3 grad / L*
//   + S (1 - mu) / (2 (1 + mu)) L(w) / L*.
// s_i are the eigenvalues of H* as seen by the conditioning policy: s_i + eps
// when damped, and only the retained modes (s_i > eps) for low rank.
absl::StatusOr<double> LogPosterior(const Vector& w, double loss_at_w,
                                    const Vector& grad_at_w,
                                    const StationaryContext& ctx);

// Same, evaluating L(w) and its gradient on `records`.
absl::StatusOr<double> LogPosterior(const ModelSpec& spec,
                                    std::span<const Record> records,
                                    const ParameterVector& w,
                                    const StationaryContext& ctx);

// L(w) = L* + (1/2) (w - w*)^T H (w - w*).
struct QuadraticObjective {
  Vector w_star;
  double l_star = 0.0;
  Matrix hessian;

  double Value(const Vector& w) const;
  Vector Gradient(const Vector& w) const;
};

// Two-parameter least-squares instance for Linear(2, 1, SquaredError) whose
// Hessian has eigenvalues 30 and 0.5 along the diagonals. Records lie on the
// eigen-axes in groups {+-x} x {+-noise}, so at the unregularized minimum
// every squared residual equals the mean loss. Yields 4 * max(n / 4, 2)
// records.
std::vector<Record> TwoScaleRegressionRecords(std::size_t n);

// Minimizer of mean squared error + (alpha / 2) |w|^2 for a single-output
// linear model without bias.
absl::StatusOr<Vector> LinearRidgeSolution(std::span<const Record> records,
                                           double alpha);

}  // namespace iha

#endif  // IHA_DYNAMICS_H_
