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

// Dataset loading (IDX, CSV), the synthetic tabular generator and
// per-record Bernoulli membership masks.

#ifndef IHA_DATA_H_
#define IHA_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "iha/model.h"

namespace iha {

struct Dataset {
  std::string name;
  int feature_dim = 0;
  int num_classes = 0;
  std::vector<Record> records;
  // Describes the column layout or generator; its hash goes into manifests.
  std::string schema;

  std::size_t size() const { return records.size(); }
  absl::Status Validate() const;
};

struct MembershipMask {
  std::vector<bool> bits;
  double gamma = 0.5;
  std::uint64_t seed = 0;

  std::size_t size() const { return bits.size(); }
  std::size_t MemberCount() const;
  std::vector<std::size_t> Members() const;
  std::vector<std::size_t> NonMembers() const;
};

struct IdxOptions {
  // Replace each label by label mod 2 (odd-vs-even digits).
  bool odd_even = false;
};

// Pixels are scaled by 1/255.
absl::StatusOr<Dataset> LoadIdx(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path,
                                const IdxOptions& options = {});
absl::StatusOr<Dataset> ParseIdx(absl::string_view image_bytes,
                                 absl::string_view label_bytes,
                                 const IdxOptions& options = {});

// Every non-label column becomes a feature in header order; labels must be
// nonnegative integers.
absl::StatusOr<Dataset> LoadCsvTabular(const std::filesystem::path& path,
                                       absl::string_view label_column);
absl::StatusOr<Dataset> ParseCsvTabular(absl::string_view text,
                                        absl::string_view label_column,
                                        std::string name = "csv");

// Binary features drawn from per-class Bernoulli prototypes. With
// separation 0 every class shares the same feature probabilities; with
// separation 1 each class uses its own sparse prototype.
absl::StatusOr<Dataset> SynthTabular(std::uint64_t seed, std::size_t n,
                                     int feature_dim, int num_classes,
                                     double class_separation);

// bit i is 1 iff CounterUniform(seed, i) < gamma.
absl::StatusOr<MembershipMask> BernoulliSplit(std::size_t n, double gamma,
                                              std::uint64_t seed);
absl::StatusOr<MembershipMask> BernoulliSplit(const Dataset& dataset,
                                              double gamma,
                                              std::uint64_t seed);

std::vector<Record> SelectRecords(const Dataset& dataset,
                                  const std::vector<std::size_t>& indices);

// Text layout: "seed=<u64>,gamma=<real>" then one line of '0'/'1'.
std::string SerializeMask(const MembershipMask& mask);
absl::StatusOr<MembershipMask> ParseMask(absl::string_view text);
absl::Status SaveMask(const MembershipMask& mask,
                      const std::filesystem::path& path);
absl::StatusOr<MembershipMask> LoadMask(const std::filesystem::path& path);

// Binary cache: "IHADAT1", then name, schema, feature_dim, num_classes and
// records, all little-endian.
std::string SerializeDataset(const Dataset& dataset);
absl::StatusOr<Dataset> ParseDataset(absl::string_view bytes);
absl::Status SaveDataset(const Dataset& dataset,
                         const std::filesystem::path& path);
absl::StatusOr<Dataset> LoadDataset(const std::filesystem::path& path);

}  // namespace iha

#endif  // IHA_DATA_H_
