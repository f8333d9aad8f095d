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

#include "iha/io.h"

#include <unistd.h>

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/string_view.h"
#include "iha/status.h"

namespace iha {

void AppendU64Le(std::string& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

void AppendF64Le(std::string& out, double value) {
  AppendU64Le(out, std::bit_cast<std::uint64_t>(value));
}

absl::Status ByteReader::ExpectMagic(absl::string_view magic) {
  IHA_ASSIGN_OR_RETURN(absl::string_view got, ReadBytes(magic.size()));
  if (got != magic) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrCat("bad magic, expected \"", magic, "\""));
  }
  return absl::OkStatus();
}

absl::StatusOr<absl::string_view> ByteReader::ReadBytes(std::size_t count) {
  if (remaining() < count) {
    return MakeError(ErrorCode::kFormatError,
                     absl::StrFormat("truncated input: wanted %d bytes at "
                                     "offset %d, have %d",
                                     count, pos_, remaining()));
  }
  absl::string_view out = bytes_.substr(pos_, count);
  pos_ += count;
  return out;
}

absl::StatusOr<std::uint64_t> ByteReader::ReadU64Le() {
  IHA_ASSIGN_OR_RETURN(absl::string_view raw, ReadBytes(8));
  std::uint64_t value = 0;
  for (int i = 7; i >= 0; --i) {
    value = (value << 8) | static_cast<unsigned char>(raw[i]);
  }
  return value;
}

absl::StatusOr<double> ByteReader::ReadF64Le() {
  IHA_ASSIGN_OR_RETURN(std::uint64_t bits, ReadU64Le());
  return std::bit_cast<double>(bits);
}

absl::StatusOr<std::uint32_t> ByteReader::ReadU32Be() {
  IHA_ASSIGN_OR_RETURN(absl::string_view raw, ReadBytes(4));
  std::uint32_t value = 0;
  for (int i = 0; i < 4; ++i) {
    value = (value << 8) | static_cast<unsigned char>(raw[i]);
  }
  return value;
}

absl::StatusOr<std::string> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    return MakeError(ErrorCode::kMissingArtifact,
                     absl::StrCat("cannot open ", path.string()));
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) {
    return MakeError(ErrorCode::kIoError,
                     absl::StrCat("read failed: ", path.string()));
  }
  return bytes;
}

absl::Status WriteFileAtomic(const std::filesystem::path& path,
                             absl::string_view bytes) {
  static std::atomic<std::uint64_t> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      return MakeError(ErrorCode::kIoError,
                       absl::StrCat("cannot create directory ",
                                    path.parent_path().string(), ": ",
                                    ec.message()));
    }
  }
  std::filesystem::path tmp = path;
  tmp += absl::StrCat(".tmp.", ::getpid(), ".", counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      return MakeError(ErrorCode::kIoError,
                       absl::StrCat("cannot write ", tmp.string()));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      return MakeError(ErrorCode::kIoError,
                       absl::StrCat("write failed: ", tmp.string()));
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    return MakeError(ErrorCode::kIoError,
                     absl::StrCat("rename failed for ", path.string()));
  }
  return absl::OkStatus();
}

std::uint64_t Fnv1a64(absl::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string HexU64(std::uint64_t value) {
  return absl::StrFormat("%016x", value);
}

}  // namespace iha
