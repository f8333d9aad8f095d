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

// Small differentiable models with exact first and second derivatives.
//
// Two architectures are supported:
//   * Linear: f(x) = W x, no bias.
//   * Mlp: ReLU hidden layers with biases, linear output layer.
// Losses are per-record and unnormalized:
//   * SquaredError: sum_k (f_k - t_k)^2, where t is the scalar label when
//     output_dim == 1 and the one-hot class vector otherwise.
//   * CrossEntropy: logsumexp(f) - f_label.
//
// Parameter layout: layers in forward order; per layer the weight matrix
// (out x in) in row-major order, followed by the bias vector if present.
//
// Hessians are of the unregularized loss and are computed by exact
// second-order backpropagation (the R-operator), not Gauss-Newton. ReLU has
// zero curvature away from its kink; at the kink its derivative is taken as 0.

#ifndef IHA_MODEL_H_
#define IHA_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "iha/linalg.h"

namespace iha {

enum class Architecture { kLinear, kMlp };
enum class LossKind { kSquaredError, kCrossEntropy };

struct LayerLayout {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;
  std::optional<std::size_t> bias_offset;
  bool relu = false;
};

struct ModelSpec {
  Architecture architecture = Architecture::kLinear;
  // Hidden layer widths; empty for Linear.
  std::vector<int> hidden_widths;
  LossKind loss = LossKind::kSquaredError;
  int input_dim = 1;
  int output_dim = 1;

  static ModelSpec Linear(int input_dim, int output_dim, LossKind loss);
  static ModelSpec Mlp(int input_dim, std::vector<int> hidden_widths,
                       int output_dim, LossKind loss);

  absl::Status Validate() const;
  std::vector<LayerLayout> Layers() const;
  std::size_t ParameterCount() const;
  // Stable textual form, e.g. "mlp:600-32-100:cross_entropy".
  std::string Canonical() const;
  std::uint64_t Hash() const;
};

struct ParameterVector {
  Vector values;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

// label holds a class index for classifiers and a real target for
// single-output regression.
struct Record {
  Vector features;
  double label = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

// Reusable evaluator over fixed weights. Holds scratch buffers, so one
// instance must not be used from several threads at once; create one per
// task instead.
class ModelEvaluator {
 public:
  static absl::StatusOr<ModelEvaluator> Create(const ModelSpec& spec,
                                               const ParameterVector& w);

  const ModelSpec& spec() const { return spec_; }
  std::size_t parameter_count() const { return parameter_count_; }
  const Vector& parameters() const { return params_; }
  absl::Status SetParameters(const Vector& values);

  absl::Status CheckRecord(const Record& z) const;

  // Network output (pre-softmax logits for classifiers).
  absl::StatusOr<Vector> Output(const Record& z);
  absl::StatusOr<double> Loss(const Record& z);
  // grad += scale * d loss(z) / dw; returns loss(z).
  absl::StatusOr<double> AccumulateGrad(const Record& z, double scale,
                                        Vector& grad);
  // AccumulateGrad without validation; `z` must pass CheckRecord and `grad`
  // must have parameter_count() entries.
  double AccumulateGradUnchecked(const Record& z, double scale, Vector& grad);
  // out += scale * H(z) * directions, column by column.
  absl::Status AccumulateHvp(const Record& z, const Matrix& directions,
                             double scale, Matrix& out);

 private:
  ModelEvaluator(ModelSpec spec, std::vector<LayerLayout> layers,
                 std::size_t parameter_count, Vector params);

  void Forward(const Record& z);
  double LossAndOutputGrad(const Record& z);

  ModelSpec spec_;
  std::vector<LayerLayout> layers_;
  std::size_t parameter_count_;
  Vector params_;

  // Scratch: pre-activations and activations per layer (activation[0] is
  // the input), output probabilities for cross-entropy, output gradient.
  std::vector<Vector> pre_;
  std::vector<Vector> act_;
  Vector probs_;
  Vector out_grad_;
  std::vector<Vector> delta_;
};

absl::StatusOr<double> Loss(const ModelSpec& spec, const ParameterVector& w,
                            const Record& z);
absl::StatusOr<Vector> Grad(const ModelSpec& spec, const ParameterVector& w,
                            const Record& z);

// Mean loss and mean gradient over `records`.
absl::StatusOr<LossGrad> DatasetLossGrad(const ModelSpec& spec,
                                         const ParameterVector& w,
                                         std::span<const Record> records);

// H(w) v for the mean unregularized loss over `records`.
absl::StatusOr<Vector> Hvp(const ModelSpec& spec, const ParameterVector& w,
                           std::span<const Record> records, const Vector& v);

struct HessianOptions {
  // Largest dense Hessian (in bytes) the caller is willing to hold.
  std::size_t max_bytes = std::size_t{2} << 30;
  // Columns computed per batched R-operator sweep.
  int block_columns = 256;
};

absl::StatusOr<SymMatrix> ExactHessian(const ModelSpec& spec,
                                       const ParameterVector& w,
                                       std::span<const Record> records,
                                       const HessianOptions& options = {});

// Glorot-uniform weights, zero biases; zeros for the linear model.
ParameterVector InitParameters(const ModelSpec& spec, std::uint64_t seed);

struct ModelMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Accuracy is argmax agreement for classifiers and thresholding at 0.5 for
// single-output regression with 0/1 targets.
absl::StatusOr<ModelMetrics> EvaluateModel(const ModelSpec& spec,
                                           const ParameterVector& w,
                                           std::span<const Record> records);

// log p_y - log(1 - p_y) for cross-entropy models; the negative loss for
// squared-error models.
absl::StatusOr<double> LogitConfidence(const ModelSpec& spec,
                                       const ParameterVector& w,
                                       const Record& z);

// Binary layout: "IHAPAR1", spec hash (u64 LE), length (u64 LE), then the
// values as f64 LE.
std::string SerializeParameters(const ModelSpec& spec,
                                const ParameterVector& w);
absl::StatusOr<ParameterVector> ParseParameters(const ModelSpec& spec,
                                                absl::string_view bytes);
absl::Status SaveParameters(const ModelSpec& spec, const ParameterVector& w,
                            const std::filesystem::path& path);
absl::StatusOr<ParameterVector> LoadParameters(
    const ModelSpec& spec, const std::filesystem::path& path);

}  // namespace iha

#endif  // IHA_MODEL_H_
