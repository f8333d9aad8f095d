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

#include "iha/data.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/ascii.h"
#include "absl/strings/match.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "iha/io.h"
#include "iha/rng.h"
#include "iha/status.h"

namespace iha {
namespace {

constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr absl::string_view kDatasetMagic = "IHADAT1";

// Prototype entries take one of two probabilities; the shared baseline is
// their mixture mean, so separation only moves class-conditional means.
constexpr double kProtoLow = 0.05;
constexpr double kProtoHigh = 0.8;
constexpr double kProtoHighProb = 0.25;
constexpr double kBaseline =
    kProtoHighProb * kProtoHigh + (1.0 - kProtoHighProb) * kProtoLow;

void AppendString(std::string& out, absl::string_view s) {
  AppendU64Le(out, s.size());
  out.append(s.data(), s.size());
}

absl::StatusOr<std::string> ReadString(ByteReader& reader) {
  IHA_ASSIGN_OR_RETURN(std::uint64_t len, reader.ReadU64Le());
  IHA_ASSIGN_OR_RETURN(absl::string_view s, reader.ReadBytes(len));
  return std::string(s);
}

}  // namespace

absl::Status Dataset::Validate() const {
  if (records.empty()) {
    return MakeError(ErrorCode::kEmptyDataset, "dataset has no records");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    if (r.features.size() != feature_dim) {
      return MakeError(ErrorCode::kDimensionMismatch,
                       absl::StrFormat("record %d has %d features, expected %d",
                                       i, r.features.size(), feature_dim));
    }
    if (num_classes > 0 &&
        (r.label < 0 || r.label >= num_classes ||
         r.label != std::floor(r.label))) {
      return MakeError(ErrorCode::kInvalidArgument,
                       absl::StrFormat("record %d has label %g outside [0, %d)",
                                       i, r.label, num_classes));
    }
  }
  return absl::OkStatus();
}

std::size_t MembershipMask::MemberCount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
}

std::vector<std::size_t> MembershipMask::Members() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> MembershipMask::NonMembers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) out.push_back(i);
  }
  return out;
}

absl::StatusOr<Dataset> ParseIdx(absl::string_view image_bytes,
                                 absl::string_view label_bytes,
                                 const IdxOptions& options) {
  ByteReader images(image_bytes);
  ByteReader labels(label_bytes);
  IHA_ASSIGN_OR_RETURN(std::uint32_t image_magic, images.ReadU32Be());
  if (image_magic != kIdxImageMagic) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("image file magic 0x%08x, expected 0x%08x",
                                     image_magic, kIdxImageMagic));
  }
  IHA_ASSIGN_OR_RETURN(std::uint32_t label_magic, labels.ReadU32Be());
  if (label_magic != kIdxLabelMagic) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("label file magic 0x%08x, expected 0x%08x",
                                     label_magic, kIdxLabelMagic));
  }
  IHA_ASSIGN_OR_RETURN(std::uint32_t count, images.ReadU32Be());
  IHA_ASSIGN_OR_RETURN(std::uint32_t rows, images.ReadU32Be());
  IHA_ASSIGN_OR_RETURN(std::uint32_t cols, images.ReadU32Be());
  IHA_ASSIGN_OR_RETURN(std::uint32_t label_count, labels.ReadU32Be());
  if (count != label_count) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("%d images but %d labels", count,
                                     label_count));
  }
  const std::uint64_t pixels = std::uint64_t{rows} * cols;
  if (pixels == 0 || pixels > (1u << 24)) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("implausible image size %dx%d", rows,
                                     cols));
  }
  if (images.remaining() != pixels * count) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("image payload has %d bytes, header "
                                     "implies %d",
                                     images.remaining(), pixels * count));
  }
  if (labels.remaining() != count) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("label payload has %d bytes, header "
                                     "implies %d",
                                     labels.remaining(), count));
  }
  Dataset out;
  out.name = options.odd_even ? "idx-odd-even" : "idx";
  out.feature_dim = static_cast<int>(pixels);
  out.schema = absl::StrCat("idx:", rows, "x", cols,
                            options.odd_even ? ":odd_even" : "");
  out.records.resize(count);
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record& r = out.records[i];
    r.features.resize(static_cast<Eigen::Index>(pixels));
    IHA_ASSIGN_OR_RETURN(absl::string_view raw, images.ReadBytes(pixels));
    for (std::uint64_t j = 0; j < pixels; ++j) {
      r.features(static_cast<Eigen::Index>(j)) =
          static_cast<unsigned char>(raw[j]) / 255.0;
    }
    IHA_ASSIGN_OR_RETURN(absl::string_view label, labels.ReadBytes(1));
    int value = static_cast<unsigned char>(label[0]);
    if (options.odd_even) value %= 2;
    r.label = value;
    max_label = std::max(max_label, value);
  }
  out.num_classes = options.odd_even ? 2 : max_label + 1;
  return out;
}

absl::StatusOr<Dataset> LoadIdx(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                const IdxOptions& options) {
  IHA_ASSIGN_OR_RETURN(std::string images, ReadFileBytes(images_path));
  IHA_ASSIGN_OR_RETURN(std::string labels, ReadFileBytes(labels_path));
  IHA_ASSIGN_OR_RETURN(Dataset out, ParseIdx(images, labels, options));
  out.name = images_path.stem().string();
  return out;
}

absl::StatusOr<Dataset> ParseCsvTabular(absl::string_view text,
                                        absl::string_view label_column,
                                        std::string name) {
  std::vector<absl::string_view> lines = absl::StrSplit(text, '\n');
  auto clean = [](absl::string_view line) {
    return absl::StripAsciiWhitespace(line);
  };
  std::size_t line_no = 0;
  while (line_no < lines.size() && clean(lines[line_no]).empty()) ++line_no;
  if (line_no == lines.size()) {
    return MakeError(ErrorCode::kFormatError, "csv has no header row");
  }
  std::vector<absl::string_view> header =
      absl::StrSplit(clean(lines[line_no]), ',');
  for (auto& h : header) h = absl::StripAsciiWhitespace(h);
  auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrCat("csv has no label column '", label_column,
                                  "'"));
  }
  const std::size_t label_index =
      static_cast<std::size_t>(label_it - header.begin());
  const std::size_t columns = header.size();

  Dataset out;
  out.name = std::move(name);
  out.feature_dim = static_cast<int>(columns - 1);
  out.schema = absl::StrCat("csv:", absl::StrJoin(header, ","), ":label=",
                            label_column);
  int max_label = -1;
  for (std::size_t l = line_no + 1; l < lines.size(); ++l) {
    absl::string_view line = clean(lines[l]);
    if (line.empty()) continue;
    std::vector<absl::string_view> fields = absl::StrSplit(line, ',');
    if (fields.size() != columns) {
      return MakeError(ErrorCode::kFormatError,
                       absl::StrFormat("line %d has %d fields, header has %d",
                                       l + 1, fields.size(), columns));
    }
    Record r;
    r.features.resize(out.feature_dim);
    Eigen::Index f = 0;
    for (std::size_t c = 0; c < columns; ++c) {
      absl::string_view field = absl::StripAsciiWhitespace(fields[c]);
      if (c == label_index) {
        int label;
        if (!absl::SimpleAtoi(field, &label) || label < 0) {
          return MakeError(ErrorCode::kFormatError,
                           absl::StrFormat("line %d: label '%s' is not a "
                                           "nonnegative integer",
                                           l + 1, field));
        }
        r.label = label;
        max_label = std::max(max_label, label);
        continue;
      }
      double value;
      if (!absl::SimpleAtod(field, &value) || !std::isfinite(value)) {
        return MakeError(ErrorCode::kFormatError,
                         absl::StrFormat("line %d column %d: '%s' is not a "
                                         "finite number",
                                         l + 1, c + 1, field));
      }
      r.features(f++) = value;
    }
    out.records.push_back(std::move(r));
  }
  out.num_classes = max_label + 1;
  return out;
}

absl::StatusOr<Dataset> LoadCsvTabular(const std::filesystem::path& path,
                                       absl::string_view label_column) {
  IHA_ASSIGN_OR_RETURN(std::string text, ReadFileBytes(path));
  return ParseCsvTabular(text, label_column, path.stem().string());
}

absl::StatusOr<Dataset> SynthTabular(std::uint64_t seed, std::size_t n,
                                     int feature_dim, int num_classes,
                                     double class_separation) {
  if (n == 0) {
    return MakeError(ErrorCode::kEmptyDataset, "synthetic dataset with n = 0");
  }
  if (feature_dim < 1 || num_classes < 1) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "feature_dim and num_classes must be >= 1");
  }
  if (!(class_separation >= 0.0 && class_separation <= 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     "class_separation must lie in [0, 1]");
  }
  Matrix probs(num_classes, feature_dim);
  CounterRng proto_rng(DeriveSeed(seed, 0));
  for (int c = 0; c < num_classes; ++c) {
    for (int j = 0; j < feature_dim; ++j) {
      const double target =
          proto_rng.NextBernoulli(kProtoHighProb) ? kProtoHigh : kProtoLow;
      probs(c, j) =
          (1.0 - class_separation) * kBaseline + class_separation * target;
    }
  }
  Dataset out;
  out.name = "synth";
  out.feature_dim = feature_dim;
  out.num_classes = num_classes;
  out.schema = absl::StrFormat("synth:seed=%d,n=%d,d=%d,k=%d,sep=%.17g", seed,
                               n, feature_dim, num_classes, class_separation);
  out.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(DeriveSeed(seed, i + 1));
    Record& r = out.records[i];
    const auto c = static_cast<int>(rng.NextBelow(num_classes));
    r.label = c;
    r.features.resize(feature_dim);
    for (int j = 0; j < feature_dim; ++j) {
      r.features(j) = rng.NextBernoulli(probs(c, j)) ? 1.0 : 0.0;
    }
  }
  return out;
}

absl::StatusOr<MembershipMask> BernoulliSplit(std::size_t n, double gamma,
                                              std::uint64_t seed) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    return MakeError(ErrorCode::kInvalidArgument,
                     absl::StrFormat("gamma %g not in (0, 1)", gamma));
  }
  MembershipMask mask;
  mask.gamma = gamma;
  mask.seed = seed;
  mask.bits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    mask.bits[i] = CounterUniform(seed, i) < gamma;
  }
  return mask;
}

absl::StatusOr<MembershipMask> BernoulliSplit(const Dataset& dataset,
                                              double gamma,
                                              std::uint64_t seed) {
  return BernoulliSplit(dataset.size(), gamma, seed);
}

std::vector<Record> SelectRecords(const Dataset& dataset,
                                  const std::vector<std::size_t>& indices) {
  std::vector<Record> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(dataset.records[i]);
  return out;
}

std::string SerializeMask(const MembershipMask& mask) {
  std::string out = absl::StrFormat("seed=%d,gamma=%.17g\n", mask.seed,
                                    mask.gamma);
  out.reserve(out.size() + mask.bits.size() + 1);
  for (bool b : mask.bits) out.push_back(b ? '1' : '0');
  out.push_back('\n');
  return out;
}

absl::StatusOr<MembershipMask> ParseMask(absl::string_view text) {
  std::vector<absl::string_view> lines = absl::StrSplit(text, '\n');
  if (lines.size() < 2) {
    return MakeError(ErrorCode::kFormatError, "mask file needs two lines");
  }
  MembershipMask mask;
  std::vector<absl::string_view> fields = absl::StrSplit(lines[0], ',');
  if (fields.size() != 2 || !absl::StartsWith(fields[0], "seed=") ||
      !absl::StartsWith(fields[1], "gamma=") ||
      !absl::SimpleAtoi(fields[0].substr(5), &mask.seed) ||
      !absl::SimpleAtod(absl::StripAsciiWhitespace(fields[1].substr(6)),
                        &mask.gamma)) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrCat("bad mask header '", lines[0], "'"));
  }
  absl::string_view bits = absl::StripAsciiWhitespace(lines[1]);
  mask.bits.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') {
      return MakeError(ErrorCode::kFormatError,
                       "mask bits must be '0' or '1'");
    }
    mask.bits.push_back(c == '1');
  }
  return mask;
}

absl::Status SaveMask(const MembershipMask& mask,
                      const std::filesystem::path& path) {
  return WriteFileAtomic(path, SerializeMask(mask));
}

absl::StatusOr<MembershipMask> LoadMask(const std::filesystem::path& path) {
  IHA_ASSIGN_OR_RETURN(std::string text, ReadFileBytes(path));
  return ParseMask(text);
}

std::string SerializeDataset(const Dataset& dataset) {
  std::string out;
  out.append(kDatasetMagic.data(), kDatasetMagic.size());
  AppendString(out, dataset.name);
  AppendString(out, dataset.schema);
  AppendU64Le(out, static_cast<std::uint64_t>(dataset.feature_dim));
  AppendU64Le(out, static_cast<std::uint64_t>(dataset.num_classes));
  AppendU64Le(out, dataset.records.size());
  for (const Record& r : dataset.records) {
    AppendF64Le(out, r.label);
    for (Eigen::Index j = 0; j < r.features.size(); ++j) {
      AppendF64Le(out, r.features(j));
    }
  }
  return out;
}

absl::StatusOr<Dataset> ParseDataset(absl::string_view bytes) {
  ByteReader reader(bytes);
  IHA_RETURN_IF_ERROR(reader.ExpectMagic(kDatasetMagic));
  Dataset out;
  IHA_ASSIGN_OR_RETURN(out.name, ReadString(reader));
  IHA_ASSIGN_OR_RETURN(out.schema, ReadString(reader));
  IHA_ASSIGN_OR_RETURN(std::uint64_t dim, reader.ReadU64Le());
  IHA_ASSIGN_OR_RETURN(std::uint64_t classes, reader.ReadU64Le());
  IHA_ASSIGN_OR_RETURN(std::uint64_t count, reader.ReadU64Le());
  if (dim > (1u << 24) || classes > (1u << 24) ||
      reader.remaining() != count * (dim + 1) * 8) {
    return MakeError(ErrorCode::kFormatError,
                     "dataset cache payload does not match its header");
  }
  out.feature_dim = static_cast<int>(dim);
  out.num_classes = static_cast<int>(classes);
  out.records.resize(count);
  for (Record& r : out.records) {
    IHA_ASSIGN_OR_RETURN(r.label, reader.ReadF64Le());
    r.features.resize(static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < r.features.size(); ++j) {
      IHA_ASSIGN_OR_RETURN(r.features(j), reader.ReadF64Le());
    }
  }
  return out;
}

absl::Status SaveDataset(const Dataset& dataset,
                         const std::filesystem::path& path) {
  return WriteFileAtomic(path, SerializeDataset(dataset));
}

absl::StatusOr<Dataset> LoadDataset(const std::filesystem::path& path) {
  IHA_ASSIGN_OR_RETURN(std::string bytes, ReadFileBytes(path));
  return ParseDataset(bytes);
}

}  // namespace iha
