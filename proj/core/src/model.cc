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

#include "iha/model.h"

#include <algorithm>
#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/string_view.h"
#include "iha/io.h"
#include "iha/rng.h"
#include "iha/status.h"

namespace iha {
namespace {

constexpr absl::string_view kParamMagic = "IHAPAR1";

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using MutWeights = Eigen::Map<RowMajor>;

absl::string_view LossName(LossKind loss) {
  return loss == LossKind::kSquaredError ? "squared_error" : "cross_entropy";
}

// Zeroes entries (or rows) where the ReLU pre-activation is not positive.
void ReluMaskRows(const Vector& pre, Vector& v) {
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    if (!(pre(i) > 0.0)) v(i) = 0.0;
  }
}

void ReluMaskRows(const Vector& pre, Matrix& m) {
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    if (!(pre(i) > 0.0)) m.row(i).setZero();
  }
}

}  // namespace

ModelSpec ModelSpec::Linear(int input_dim, int output_dim, LossKind loss) {
  ModelSpec spec;
  spec.architecture = Architecture::kLinear;
  spec.loss = loss;
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  return spec;
}

ModelSpec ModelSpec::Mlp(int input_dim, std::vector<int> hidden_widths,
                         int output_dim, LossKind loss) {
  ModelSpec spec;
  spec.architecture = Architecture::kMlp;
  spec.hidden_widths = std::move(hidden_widths);
  spec.loss = loss;
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  return spec;
}

absl::Status ModelSpec::Validate() const {
  if (input_dim < 1 || output_dim < 1) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "input and output dimensions must be >= 1");
  }
  if (architecture == Architecture::kLinear && !hidden_widths.empty()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "linear model cannot have hidden layers");
  }
  if (architecture == Architecture::kMlp && hidden_widths.empty()) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "mlp needs at least one hidden layer");
  }
  for (int width : hidden_widths) {
    if (width < 1) {
      return MakeError(ErrorCode::kInvalidArgument,
                       "hidden widths must be >= 1");
    }
  }
  if (loss == LossKind::kCrossEntropy && output_dim < 2) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "cross-entropy needs at least two outputs");
  }
  return absl::OkStatus();
}

std::vector<LayerLayout> ModelSpec::Layers() const {
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_widths.begin(), hidden_widths.end());
  dims.push_back(output_dim);
  const bool mlp = architecture == Architecture::kMlp;
  std::vector<LayerLayout> layers;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    LayerLayout layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    layer.weight_offset = offset;
    offset += static_cast<std::size_t>(layer.in) * layer.out;
    if (mlp) {
      layer.bias_offset = offset;
      offset += layer.out;
    }
    layer.relu = mlp && l + 2 < dims.size();
    layers.push_back(layer);
  }
  return layers;
}

std::size_t ModelSpec::ParameterCount() const {
  std::size_t count = 0;
  for (const LayerLayout& layer : Layers()) {
    count += static_cast<std::size_t>(layer.in) * layer.out;
    if (layer.bias_offset) count += layer.out;
  }
  return count;
}

std::string ModelSpec::Canonical() const {
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_widths.begin(), hidden_widths.end());
  dims.push_back(output_dim);
  return absl::StrCat(architecture == Architecture::kLinear ? "linear" : "mlp",
                      ":", absl::StrJoin(dims, "-"), ":", LossName(loss));
}

std::uint64_t ModelSpec::Hash() const { return Fnv1a64(Canonical()); }

ModelEvaluator::ModelEvaluator(ModelSpec spec, std::vector<LayerLayout> layers,
                               std::size_t parameter_count, Vector params)
    : spec_(std::move(spec)),
      layers_(std::move(layers)),
      parameter_count_(parameter_count),
      params_(std::move(params)) {
  pre_.resize(layers_.size());
  delta_.resize(layers_.size());
  act_.resize(layers_.size() + 1);
  act_[0].resize(spec_.input_dim);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    pre_[l].resize(layers_[l].out);
    delta_[l].resize(layers_[l].out);
    act_[l + 1].resize(layers_[l].out);
  }
  probs_.resize(spec_.output_dim);
  out_grad_.resize(spec_.output_dim);
}

absl::StatusOr<ModelEvaluator> ModelEvaluator::Create(
    const ModelSpec& spec, const ParameterVector& w) {
  IHA_RETURN_IF_ERROR(spec.Validate());
  const std::size_t count = spec.ParameterCount();
  if (w.size() != count) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     absl::StrFormat("model %s has %d parameters, got %d",
                                     spec.Canonical(), count, w.size()));
  }
  if (!w.values.allFinite()) {
    return MakeError(ErrorCode::kNonFiniteInput,
                     "parameters contain NaN or infinite values");
  }
  return ModelEvaluator(spec, spec.Layers(), count, w.values);
}

absl::Status ModelEvaluator::SetParameters(const Vector& values) {
  if (static_cast<std::size_t>(values.size()) != parameter_count_) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "parameter vector has the wrong length");
  }
  if (!values.allFinite()) {
    return MakeError(ErrorCode::kNonFiniteInput,
                     "parameters contain NaN or infinite values");
  }
  params_ = values;
  return absl::OkStatus();
}

absl::Status ModelEvaluator::CheckRecord(const Record& z) const {
  if (z.features.size() != spec_.input_dim) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     absl::StrFormat("record has %d features, model expects %d",
                                     z.features.size(), spec_.input_dim));
  }
  if (!z.features.allFinite() || !std::isfinite(z.label)) {
    return MakeError(ErrorCode::kNonFiniteInput,
                     "record contains NaN or infinite values");
  }
  const bool classifier = spec_.loss == LossKind::kCrossEntropy ||
                          spec_.output_dim > 1;
  if (classifier) {
    if (z.label != std::floor(z.label) || z.label < 0 ||
        z.label >= spec_.output_dim) {
      return MakeError(ErrorCode::kInvalidArgument,
                       absl::StrFormat("label %g is not a class in [0, %d)",
                                       z.label, spec_.output_dim));
    }
  }
  return absl::OkStatus();
}

void ModelEvaluator::Forward(const Record& z) {
  act_[0] = z.features;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerLayout& layer = layers_[l];
    ConstWeights weights(params_.data() + layer.weight_offset, layer.out,
                         layer.in);
    pre_[l].noalias() = weights * act_[l];
    if (layer.bias_offset) {
      pre_[l] += params_.segment(*layer.bias_offset, layer.out);
    }
    if (layer.relu) {
      act_[l + 1] = pre_[l].cwiseMax(0.0);
    } else {
      act_[l + 1] = pre_[l];
    }
  }
}

double ModelEvaluator::LossAndOutputGrad(const Record& z) {
  const Vector& f = pre_.back();
  if (spec_.loss == LossKind::kSquaredError) {
    if (spec_.output_dim == 1) {
      const double diff = f(0) - z.label;
      out_grad_(0) = 2.0 * diff;
      return diff * diff;
    }
    out_grad_ = f;
    out_grad_(static_cast<Eigen::Index>(z.label)) -= 1.0;
    const double loss = out_grad_.squaredNorm();
    out_grad_ *= 2.0;
    return loss;
  }
  const auto y = static_cast<Eigen::Index>(z.label);
  const double max = f.maxCoeff();
  probs_ = (f.array() - max).exp();
  const double sum = probs_.sum();
  probs_ /= sum;
  out_grad_ = probs_;
  out_grad_(y) -= 1.0;
  return max + std::log(sum) - f(y);
}

absl::StatusOr<Vector> ModelEvaluator::Output(const Record& z) {
  IHA_RETURN_IF_ERROR(CheckRecord(z));
  Forward(z);
  return pre_.back();
}

absl::StatusOr<double> ModelEvaluator::Loss(const Record& z) {
  IHA_RETURN_IF_ERROR(CheckRecord(z));
  Forward(z);
  return LossAndOutputGrad(z);
}

absl::StatusOr<double> ModelEvaluator::AccumulateGrad(const Record& z,
                                                      double scale,
                                                      Vector& grad) {
  IHA_RETURN_IF_ERROR(CheckRecord(z));
  if (static_cast<std::size_t>(grad.size()) != parameter_count_) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "gradient accumulator has the wrong length");
  }
  return AccumulateGradUnchecked(z, scale, grad);
}

double ModelEvaluator::AccumulateGradUnchecked(const Record& z, double scale,
                                               Vector& grad) {
  Forward(z);
  const double loss = LossAndOutputGrad(z);
  delta_.back() = out_grad_;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const LayerLayout& layer = layers_[l];
    MutWeights g(grad.data() + layer.weight_offset, layer.out, layer.in);
    g.noalias() += scale * delta_[l] * act_[l].transpose();
    if (layer.bias_offset) {
      grad.segment(*layer.bias_offset, layer.out) += scale * delta_[l];
    }
    if (l > 0) {
      ConstWeights weights(params_.data() + layer.weight_offset, layer.out,
                           layer.in);
      delta_[l - 1].noalias() = weights.transpose() * delta_[l];
      ReluMaskRows(pre_[l - 1], delta_[l - 1]);
    }
  }
  return loss;
}

absl::Status ModelEvaluator::AccumulateHvp(const Record& z,
                                           const Matrix& directions,
                                           double scale, Matrix& out) {
  IHA_RETURN_IF_ERROR(CheckRecord(z));
  const auto p = static_cast<Eigen::Index>(parameter_count_);
  if (directions.rows() != p || out.rows() != p ||
      out.cols() != directions.cols()) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "direction or output block has the wrong shape");
  }
  const Eigen::Index k = directions.cols();
  const std::size_t num_layers = layers_.size();

  // Forward and ordinary backward pass.
  Forward(z);
  LossAndOutputGrad(z);
  delta_.back() = out_grad_;
  for (std::size_t l = num_layers; l-- > 1;) {
    const LayerLayout& layer = layers_[l];
    ConstWeights weights(params_.data() + layer.weight_offset, layer.out,
                         layer.in);
    delta_[l - 1].noalias() = weights.transpose() * delta_[l];
    ReluMaskRows(pre_[l - 1], delta_[l - 1]);
  }

  // R-forward: r_act[l] is the directional derivative of act_[l].
  std::vector<Matrix> r_act(num_layers + 1);
  r_act[0] = Matrix::Zero(spec_.input_dim, k);
  Matrix r_pre;
  for (std::size_t l = 0; l < num_layers; ++l) {
    const LayerLayout& layer = layers_[l];
    ConstWeights weights(params_.data() + layer.weight_offset, layer.out,
                         layer.in);
    if (l > 0) {
      r_pre.noalias() = weights * r_act[l];
    } else {
      r_pre.setZero(layer.out, k);
    }
    for (int r = 0; r < layer.out; ++r) {
      r_pre.row(r).noalias() +=
          act_[l].transpose() *
          directions.middleRows(layer.weight_offset +
                                    static_cast<std::size_t>(r) * layer.in,
                                layer.in);
    }
    if (layer.bias_offset) {
      r_pre += directions.middleRows(*layer.bias_offset, layer.out);
    }
    r_act[l + 1] = r_pre;
    if (layer.relu) ReluMaskRows(pre_[l], r_act[l + 1]);
  }

  // Output-layer curvature applied to the output directional derivative.
  const Matrix& r_out = r_act[num_layers];
  Matrix r_delta;
  if (spec_.loss == LossKind::kSquaredError) {
    r_delta = 2.0 * r_out;
  } else {
    const Eigen::RowVectorXd mixed = probs_.transpose() * r_out;
    r_delta = probs_.asDiagonal() * r_out;
    r_delta.noalias() -= probs_ * mixed;
  }

  // R-backward.
  Matrix next;
  for (std::size_t l = num_layers; l-- > 0;) {
    const LayerLayout& layer = layers_[l];
    for (int r = 0; r < layer.out; ++r) {
      auto block = out.middleRows(
          layer.weight_offset + static_cast<std::size_t>(r) * layer.in,
          layer.in);
      block.noalias() += scale * act_[l] * r_delta.row(r);
      if (l > 0) block += (scale * delta_[l](r)) * r_act[l];
    }
    if (layer.bias_offset) {
      out.middleRows(*layer.bias_offset, layer.out) += scale * r_delta;
    }
    if (l > 0) {
      ConstWeights weights(params_.data() + layer.weight_offset, layer.out,
                           layer.in);
      next.noalias() = weights.transpose() * r_delta;
      for (int r = 0; r < layer.out; ++r) {
        next += delta_[l](r) *
                directions.middleRows(
                    layer.weight_offset + static_cast<std::size_t>(r) * layer.in,
                    layer.in);
      }
      ReluMaskRows(pre_[l - 1], next);
      r_delta.swap(next);
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<double> Loss(const ModelSpec& spec, const ParameterVector& w,
                            const Record& z) {
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  return eval.Loss(z);
}

absl::StatusOr<Vector> Grad(const ModelSpec& spec, const ParameterVector& w,
                            const Record& z) {
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(w.size()));
  IHA_RETURN_IF_ERROR(eval.AccumulateGrad(z, 1.0, grad).status());
  return grad;
}

absl::StatusOr<LossGrad> DatasetLossGrad(const ModelSpec& spec,
                                         const ParameterVector& w,
                                         std::span<const Record> records) {
  if (records.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "no records");
  }
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  LossGrad out;
  out.grad = Vector::Zero(static_cast<Eigen::Index>(w.size()));
  const double scale = 1.0 / static_cast<double>(records.size());
  for (const Record& z : records) {
    IHA_ASSIGN_OR_RETURN(double loss, eval.AccumulateGrad(z, scale, out.grad));
    out.loss += loss * scale;
  }
  return out;
}

absl::StatusOr<Vector> Hvp(const ModelSpec& spec, const ParameterVector& w,
                           std::span<const Record> records, const Vector& v) {
  if (records.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "no records");
  }
  if (v.size() != static_cast<Eigen::Index>(w.size())) {
    return MakeError(ErrorCode::kDimensionMismatch,
                     "direction has the wrong length");
  }
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  Matrix direction = v;
  Matrix out = Matrix::Zero(v.size(), 1);
  const double scale = 1.0 / static_cast<double>(records.size());
  for (const Record& z : records) {
    IHA_RETURN_IF_ERROR(eval.AccumulateHvp(z, direction, scale, out));
  }
  return Vector(out.col(0));
}

absl::StatusOr<SymMatrix> ExactHessian(const ModelSpec& spec,
                                       const ParameterVector& w,
                                       std::span<const Record> records,
                                       const HessianOptions& options) {
  IHA_RETURN_IF_ERROR(spec.Validate());
  const std::size_t p = spec.ParameterCount();
  if (p > options.max_bytes / sizeof(double) / std::max<std::size_t>(p, 1)) {
    return MakeError(
        ErrorCode::kHessianTooLarge,
        absl::StrFormat("dense Hessian of %d parameters needs %d bytes, "
                        "budget is %d",
                        p, p * p * sizeof(double), options.max_bytes));
  }
  if (records.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "no records");
  }
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  const auto dim = static_cast<Eigen::Index>(p);
  const Eigen::Index block =
      std::clamp<Eigen::Index>(options.block_columns, 1, dim);
  const double scale = 1.0 / static_cast<double>(records.size());
  Matrix hessian(dim, dim);
  Matrix directions;
  Matrix out;
  for (Eigen::Index start = 0; start < dim; start += block) {
    const Eigen::Index cols = std::min(block, dim - start);
    directions = Matrix::Zero(dim, cols);
    for (Eigen::Index c = 0; c < cols; ++c) directions(start + c, c) = 1.0;
    out = Matrix::Zero(dim, cols);
    for (const Record& z : records) {
      IHA_RETURN_IF_ERROR(eval.AccumulateHvp(z, directions, scale, out));
    }
    hessian.middleCols(start, cols) = out;
  }
  if (!hessian.allFinite()) {
    return MakeError(ErrorCode::kDivergedNumerically,
                     "Hessian has non-finite entries");
  }
  return SymMatrix::Symmetrized(hessian);
}

ParameterVector InitParameters(const ModelSpec& spec, std::uint64_t seed) {
  ParameterVector w;
  w.values = Vector::Zero(static_cast<Eigen::Index>(spec.ParameterCount()));
  if (spec.architecture == Architecture::kLinear) return w;
  CounterRng rng(DeriveSeed(seed, 0x696e6974));
  for (const LayerLayout& layer : spec.Layers()) {
    const double bound = std::sqrt(6.0 / (layer.in + layer.out));
    const std::size_t count = static_cast<std::size_t>(layer.in) * layer.out;
    for (std::size_t i = 0; i < count; ++i) {
      w.values(static_cast<Eigen::Index>(layer.weight_offset + i)) =
          bound * (2.0 * rng.NextUnit() - 1.0);
    }
  }
  return w;
}

absl::StatusOr<ModelMetrics> EvaluateModel(const ModelSpec& spec,
                                           const ParameterVector& w,
                                           std::span<const Record> records) {
  if (records.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "no records");
  }
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  ModelMetrics metrics;
  std::size_t correct = 0;
  for (const Record& z : records) {
    IHA_ASSIGN_OR_RETURN(double loss, eval.Loss(z));
    metrics.loss += loss;
    IHA_ASSIGN_OR_RETURN(Vector f, eval.Output(z));
    bool hit;
    if (spec.output_dim == 1) {
      hit = (f(0) >= 0.5) == (z.label >= 0.5);
    } else {
      Eigen::Index arg;
      f.maxCoeff(&arg);
      hit = arg == static_cast<Eigen::Index>(z.label);
    }
    if (hit) ++correct;
  }
  const double n = static_cast<double>(records.size());
  metrics.loss /= n;
  metrics.accuracy = static_cast<double>(correct) / n;
  return metrics;
}

absl::StatusOr<double> LogitConfidence(const ModelSpec& spec,
                                       const ParameterVector& w,
                                       const Record& z) {
  IHA_ASSIGN_OR_RETURN(ModelEvaluator eval, ModelEvaluator::Create(spec, w));
  if (spec.loss == LossKind::kSquaredError) {
    IHA_ASSIGN_OR_RETURN(double loss, eval.Loss(z));
    return -loss;
  }
  IHA_ASSIGN_OR_RETURN(Vector f, eval.Output(z));
  const auto y = static_cast<Eigen::Index>(z.label);
  double max_other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (i != y) max_other = std::max(max_other, f(i));
  }
  double sum_other = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (i != y) sum_other += std::exp(f(i) - max_other);
  }
  return f(y) - (max_other + std::log(sum_other));
}

std::string SerializeParameters(const ModelSpec& spec,
                                const ParameterVector& w) {
  std::string out;
  out.reserve(kParamMagic.size() + 16 + 8 * w.size());
  out.append(kParamMagic.data(), kParamMagic.size());
  AppendU64Le(out, spec.Hash());
  AppendU64Le(out, w.size());
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    AppendF64Le(out, w.values(i));
  }
  return out;
}

absl::StatusOr<ParameterVector> ParseParameters(const ModelSpec& spec,
                                                absl::string_view bytes) {
  ByteReader reader(bytes);
  IHA_RETURN_IF_ERROR(reader.ExpectMagic(kParamMagic));
  IHA_ASSIGN_OR_RETURN(std::uint64_t hash, reader.ReadU64Le());
  if (hash != spec.Hash()) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrCat("parameter file was written for a different "
                                  "model than ",
                                  spec.Canonical()));
  }
  IHA_ASSIGN_OR_RETURN(std::uint64_t length, reader.ReadU64Le());
  if (length != spec.ParameterCount() || reader.remaining() != 8 * length) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("parameter payload length %d does not "
                                     "match model size %d",
                                     length, spec.ParameterCount()));
  }
  ParameterVector w;
  w.values.resize(static_cast<Eigen::Index>(length));
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    IHA_ASSIGN_OR_RETURN(w.values(i), reader.ReadF64Le());
  }
  return w;
}

absl::Status SaveParameters(const ModelSpec& spec, const ParameterVector& w,
                            const std::filesystem::path& path) {
  return WriteFileAtomic(path, SerializeParameters(spec, w));
}

absl::StatusOr<ParameterVector> LoadParameters(
    const ModelSpec& spec, const std::filesystem::path& path) {
  IHA_ASSIGN_OR_RETURN(std::string bytes, ReadFileBytes(path));
  return ParseParameters(spec, bytes);
}

}  // namespace iha
