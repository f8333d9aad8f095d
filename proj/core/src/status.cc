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

#include "iha/status.h"

#include <array>
#include <string>

#include "absl/strings/cord.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/string_view.h"

namespace iha {
namespace {

constexpr absl::string_view kPayloadUrl = "type.iha/error_code";

struct CodeInfo {
  ErrorCode code;
  absl::string_view name;
  absl::StatusCode canonical;
};

constexpr std::array<CodeInfo, 19> kCodes = {{
    {ErrorCode::kInvalidArgument, "InvalidArgument",
     absl::StatusCode::kInvalidArgument},
    {ErrorCode::kNonFiniteInput, "NonFiniteInput",
     absl::StatusCode::kInvalidArgument},
    {ErrorCode::kDimensionMismatch, "DimensionMismatch",
     absl::StatusCode::kInvalidArgument},
    {ErrorCode::kIllConditioned, "IllConditioned",
     absl::StatusCode::kFailedPrecondition},
    {ErrorCode::kDivergedNumerically, "DivergedNumerically",
     absl::StatusCode::kInternal},
    {ErrorCode::kIndefiniteOperator, "IndefiniteOperator",
     absl::StatusCode::kFailedPrecondition},
    {ErrorCode::kEmptyDataset, "EmptyDataset",
     absl::StatusCode::kInvalidArgument},
    {ErrorCode::kHessianTooLarge, "HessianTooLarge",
     absl::StatusCode::kResourceExhausted},
    {ErrorCode::kFormatError, "FormatError", absl::StatusCode::kDataLoss},
    {ErrorCode::kInsufficientData, "InsufficientData",
     absl::StatusCode::kFailedPrecondition},
    {ErrorCode::kInvalidBatch, "InvalidBatch",
     absl::StatusCode::kInvalidArgument},
    {ErrorCode::kUnstableRegime, "UnstableRegime",
     absl::StatusCode::kFailedPrecondition},
    {ErrorCode::kInsufficientSamples, "InsufficientSamples",
     absl::StatusCode::kFailedPrecondition},
    {ErrorCode::kMissingContext, "MissingContext",
     absl::StatusCode::kFailedPrecondition},
    {ErrorCode::kInsufficientReferences, "InsufficientReferences",
     absl::StatusCode::kFailedPrecondition},
    {ErrorCode::kDegenerateLabels, "DegenerateLabels",
     absl::StatusCode::kInvalidArgument},
    {ErrorCode::kIndexMismatch, "IndexMismatch",
     absl::StatusCode::kInvalidArgument},
    {ErrorCode::kIoError, "IoError", absl::StatusCode::kUnavailable},
    {ErrorCode::kMissingArtifact, "MissingArtifact",
     absl::StatusCode::kNotFound},
}};

const CodeInfo& Info(ErrorCode code) {
  for (const CodeInfo& info : kCodes) {
    if (info.code == code) return info;
  }
  return kCodes[0];
}

}  // namespace

absl::string_view ErrorCodeName(ErrorCode code) { return Info(code).name; }

absl::Status MakeError(ErrorCode code, absl::string_view message) {
  const CodeInfo& info = Info(code);
  absl::Status status(info.canonical, absl::StrCat(info.name, ": ", message));
  status.SetPayload(kPayloadUrl, absl::Cord(info.name));
  return status;
}

std::optional<ErrorCode> GetErrorCode(const absl::Status& status) {
  auto payload = status.GetPayload(kPayloadUrl);
  if (!payload.has_value()) return std::nullopt;
  const std::string name(*payload);
  for (const CodeInfo& info : kCodes) {
    if (info.name == name) return info.code;
  }
  return std::nullopt;
}

}  // namespace iha
