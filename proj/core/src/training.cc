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
#include <numeric>
#include <utility>

#include "absl/strings/str_format.h"
#include "iha/rng.h"
#include "iha/status.h"

namespace iha {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;

absl::Status StepInPlace(SgdState& state, const Vector& total_grad,
                         const SgdConfig& cfg) {
  if (!total_grad.allFinite()) {
    return MakeError(ErrorCode::kDivergedNumerically,
                     absl::StrFormat("non-finite gradient at step %d",
                                     state.step_count));
  }
  state.h = cfg.momentum * state.h + total_grad;
  state.w.noalias() -= cfg.learning_rate * state.h;
  ++state.step_count;
  return absl::OkStatus();
}

// Produces the member indices of successive minibatches.
class BatchSource {
 public:
  BatchSource(std::size_t n, const SgdConfig& cfg)
      : cfg_(cfg), rng_(DeriveSeed(cfg.seed, kBatchStream)), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    batch_.resize(static_cast<std::size_t>(cfg.batch_size));
  }

  const std::vector<std::size_t>& Next() {
    const std::size_t s = batch_.size();
    if (cfg_.sampling == BatchSampling::kIid) {
      for (std::size_t i = 0; i < s; ++i) batch_[i] = rng_.NextBelow(order_.size());
      return batch_;
    }
    if (cursor_ == 0 || cursor_ + s > order_.size()) {
      Shuffle(order_, rng_);
      cursor_ = 0;
    }
    std::copy_n(order_.begin() + static_cast<std::ptrdiff_t>(cursor_), s,
                batch_.begin());
    cursor_ += s;
    return batch_;
  }

 private:
  const SgdConfig& cfg_;
  CounterRng rng_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> batch_;
  std::size_t cursor_ = 0;
};

// Computes g = batch mean gradient + alpha w into `grad`.
absl::Status BatchGradient(ModelEvaluator& eval,
                           std::span<const Record> records,
                           const std::vector<std::size_t>& batch,
                           const SgdState& state, const SgdConfig& cfg,
                           Vector& grad) {
  IHA_RETURN_IF_ERROR(eval.SetParameters(state.w));
  grad = cfg.weight_decay * state.w;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    eval.AccumulateGradUnchecked(records[i], scale, grad);
  }
  return absl::OkStatus();
}

absl::Status CheckRecords(const ModelEvaluator& eval,
                          std::span<const Record> records) {
  for (const Record& z : records) IHA_RETURN_IF_ERROR(eval.CheckRecord(z));
  return absl::OkStatus();
}

absl::Status CheckNorm(const SgdState& state) {
  const double norm = state.w.norm();
  if (!(norm <= kDivergenceNorm)) {
    return MakeError(ErrorCode::kDivergedNumerically,
                     absl::StrFormat("parameter norm %g exceeds %g at step %d",
                                     norm, kDivergenceNorm, state.step_count));
  }
  return absl::OkStatus();
}

}  // namespace

absl::Status SgdConfig::Validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "learning rate must be positive and finite");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument, "momentum must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "weight decay must be nonnegative and finite");
  }
  if (batch_size < 1) {
    return MakeError(ErrorCode::kInvalidArgument, "batch size must be >= 1");
  }
  if (epochs < 1) {
    return MakeError(ErrorCode::kInvalidArgument, "epochs must be >= 1");
  }
  return absl::OkStatus();
}

SgdState SgdState::Start(Vector w) {
  SgdState state;
  state.h = Vector::Zero(w.size());
  state.w = std::move(w);
  return state;
}

absl::StatusOr<SgdState> SgdStep(const SgdState& state,
                                 const Vector& total_grad,
                                 const SgdConfig& cfg) {
  if (total_grad.size() != state.w.size() || state.h.size() != state.w.size()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "gradient, velocity and parameters differ in length");
  }
  SgdState next = state;
  IHA_RETURN_IF_ERROR(StepInPlace(next, total_grad, cfg));
  return next;
}

absl::StatusOr<ParameterVector> TrainOnRecords(const ModelSpec& spec,
                                               std::span<const Record> records,
                                               const SgdConfig& cfg) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  if (records.size() < static_cast<std::size_t>(cfg.batch_size)) {
    return MakeError(ErrorCode::kInsufficientData,
                     absl::StrFormat("%d training records, batch size %d",
                                     records.size(), cfg.batch_size));
  }
  ParameterVector init =
      InitParameters(spec, DeriveSeed(cfg.seed, kInitStream));
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval,
                       ModelEvaluator::Create(spec, init));
  IHA_RETURN_IF_ERROR(CheckRecords(eval, records));
  SgdState state = SgdState::Start(std::move(init.values));
  BatchSource batches(records.size(), cfg);
  const std::size_t steps_per_epoch =
      records.size() / static_cast<std::size_t>(cfg.batch_size);
  Vector grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      IHA_RETURN_IF_ERROR(
          BatchGradient(eval, records, batches.Next(), state, cfg, grad));
      IHA_RETURN_IF_ERROR(StepInPlace(state, grad, cfg));
    }
    IHA_RETURN_IF_ERROR(CheckNorm(state));
  }
  return ParameterVector{std::move(state.w)};
}

absl::StatusOr<ParameterVector> Train(const ModelSpec& spec,
                                      const Dataset& dataset,
                                      const MembershipMask& mask,
                                      const SgdConfig& cfg) {
  if (mask.size() != dataset.size()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "mask length differs from dataset size");
  }
  const std::vector<Record> members = SelectRecords(dataset, mask.Members());
  return TrainOnRecords(spec, members, cfg);
}

absl::StatusOr<std::vector<ParameterVector>> CaptureTrajectory(
    const ModelSpec& spec, std::span<const Record> records,
    const SgdConfig& cfg, std::int64_t burn_in, std::int64_t samples,
    std::int64_t thin, const std::optional<Vector>& initial) {
  IHA_RETURN_IF_ERROR(cfg.Validate());
  if (burn_in < 0 || samples < 0 || thin < 1) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "burn_in and samples must be >= 0 and thin >= 1");
  }
  std::vector<ParameterVector> out;
  if (samples == 0) return out;
  if (records.size() < static_cast<std::size_t>(cfg.batch_size)) {
    return MakeError(ErrorCode::kInsufficientData,
                     "fewer records than one batch");
  }
  ParameterVector start = initial.has_value()
                              ? ParameterVector{*initial}
                              : InitParameters(spec, DeriveSeed(cfg.seed,
                                                                kInitStream));
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval,
                       ModelEvaluator::Create(spec, start));
  IHA_RETURN_IF_ERROR(CheckRecords(eval, records));
  SgdState state = SgdState::Start(std::move(start.values));
  BatchSource batches(records.size(), cfg);
  out.reserve(static_cast<std::size_t>(samples));
  Vector grad;
  const std::int64_t total = burn_in + samples * thin;
  for (std::int64_t t = 1; t <= total; ++t) {
    IHA_RETURN_IF_ERROR(
        BatchGradient(eval, records, batches.Next(), state, cfg, grad));
    IHA_RETURN_IF_ERROR(StepInPlace(state, grad, cfg));
    if (t % 1024 == 0) IHA_RETURN_IF_ERROR(CheckNorm(state));
    if (t > burn_in && (t - burn_in) % thin == 0) {
      out.push_back(ParameterVector{state.w});
    }
  }
  IHA_RETURN_IF_ERROR(CheckNorm(state));
  return out;
}

}  // namespace iha
