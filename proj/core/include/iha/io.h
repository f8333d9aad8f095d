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

// Byte-level helpers shared by the persisted formats. All multi-byte values
// are little-endian regardless of host order.

#ifndef IHA_IO_H_
#define IHA_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace iha {

void AppendU64Le(std::string& out, std::uint64_t value);
void AppendF64Le(std::string& out, double value);

// Sequential reader over a byte buffer. Reads past the end fail with
// FormatError instead of returning garbage.
class ByteReader {
 public:
  explicit ByteReader(absl::string_view bytes) : bytes_(bytes) {}

  absl::Status ExpectMagic(absl::string_view magic);
  absl::StatusOr<std::uint64_t> ReadU64Le();
  absl::StatusOr<double> ReadF64Le();
  absl::StatusOr<std::uint32_t> ReadU32Be();
  absl::StatusOr<absl::string_view> ReadBytes(std::size_t count);

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  absl::string_view bytes_;
  std::size_t pos_ = 0;
};

absl::StatusOr<std::string> ReadFileBytes(const std::filesystem::path& path);

// Writes through a unique temporary name in the same directory, then renames
// over `path`, so readers never observe a partial file.
absl::Status WriteFileAtomic(const std::filesystem::path& path,
                             absl::string_view bytes);

// 64-bit FNV-1a; used for config and schema fingerprints.
std::uint64_t Fnv1a64(absl::string_view bytes);
std::string HexU64(std::uint64_t value);

}  // namespace iha

#endif  // IHA_IO_H_
