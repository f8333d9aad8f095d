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

#ifndef IHA_STATUS_H_
#define IHA_STATUS_H_

#include <optional>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace iha {

// Domain error kinds. Every non-OK status produced by this library carries
// one of these as a payload, so callers can branch on the kind without
// parsing messages.
enum class ErrorCode {
  kInvalidArgument,
  kNonFiniteInput,
  kDimensionMismatch,
  kIllConditioned,
  kDivergedNumerically,
  kIndefiniteOperator,
  kEmptyDataset,
  kHessianTooLarge,
  kFormatError,
  kInsufficientData,
  kInvalidBatch,
  kUnstableRegime,
  kInsufficientSamples,
  kMissingContext,
  kInsufficientReferences,
  kDegenerateLabels,
  kIndexMismatch,
  kIoError,
  kMissingArtifact,
};

absl::string_view ErrorCodeName(ErrorCode code);

// Builds a status whose message is prefixed with the kind name.
absl::Status MakeError(ErrorCode code, absl::string_view message);

// Returns the kind attached by MakeError, if any.
std::optional<ErrorCode> GetErrorCode(const absl::Status& status);

inline bool HasErrorCode(const absl::Status& status, ErrorCode code) {
  return GetErrorCode(status) == code;
}

}  // namespace iha

#define IHA_STATUS_CONCAT_INNER_(a, b) a##b
#define IHA_STATUS_CONCAT_(a, b) IHA_STATUS_CONCAT_INNER_(a, b)

#define IHA_RETURN_IF_ERROR(expr)              \
  do {                                         \
    ::absl::Status iha_status_ = (expr);       \
    if (!iha_status_.ok()) return iha_status_; \
  } while (false)

#define IHA_ASSIGN_OR_RETURN_IMPL_(tmp, lhs, expr) \
  auto tmp = (expr);                               \
  if (!tmp.ok()) return std::move(tmp).status();   \
  lhs = std::move(tmp).value()

#define IHA_ASSIGN_OR_RETURN(lhs, expr) \
  IHA_ASSIGN_OR_RETURN_IMPL_(           \
      IHA_STATUS_CONCAT_(iha_statusor_, __LINE__), lhs, expr)

#endif  // IHA_STATUS_H_
