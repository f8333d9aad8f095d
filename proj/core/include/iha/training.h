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

// Minibatch SGD with heavy-ball momentum and L2 regularization:
//   h' = mu h + g,   w' = w - lambda h',   g = batch mean gradient + alpha w.

#ifndef IHA_TRAINING_H_
#define IHA_TRAINING_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "iha/data.h"
#include "iha/linalg.h"
#include "iha/model.h"

namespace iha {

enum class BatchSampling {
  // Reshuffle the training set every epoch and walk it in disjoint batches.
  kShuffle,
  // Draw every batch independently, uniformly with replacement.
  kIid,
};

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 32;
  int epochs = 1;
  std::uint64_t seed = 0;
  BatchSampling sampling = BatchSampling::kShuffle;

  absl::Status Validate() const;
};

struct SgdState {
  Vector w;
  Vector h;
  std::int64_t step_count = 0;

  // Zero velocity, zero steps.
  static SgdState Start(Vector w);
};

// One update with a gradient that already contains alpha w and batch noise.
absl::StatusOr<SgdState> SgdStep(const SgdState& state,
                                 const Vector& total_grad,
                                 const SgdConfig& cfg);

// Trains from InitParameters(spec, seed) for cfg.epochs epochs of
// floor(n / S) steps each. Deterministic in all inputs.
absl::StatusOr<ParameterVector> TrainOnRecords(const ModelSpec& spec,
                                               std::span<const Record> records,
                                               const SgdConfig& cfg);

// Trains on the records selected by `mask`.
absl::StatusOr<ParameterVector> Train(const ModelSpec& spec,
                                      const Dataset& dataset,
                                      const MembershipMask& mask,
                                      const SgdConfig& cfg);

// Runs SGD on `records` (ignoring cfg.epochs), discards `burn_in` steps,
// then keeps every `thin`-th iterate until `samples` snapshots exist.
// Starts from `initial` when given, else from InitParameters.
absl::StatusOr<std::vector<ParameterVector>> CaptureTrajectory(
    const ModelSpec& spec, std::span<const Record> records,
    const SgdConfig& cfg, std::int64_t burn_in, std::int64_t samples,
    std::int64_t thin, const std::optional<Vector>& initial = std::nullopt);

// Parameter norm beyond which training is treated as divergent.
inline constexpr double kDivergenceNorm = 1e8;

}  // namespace iha

#endif  // IHA_TRAINING_H_
