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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "gtest/gtest.h"
#include "iha/io.h"
#include "iha/parallel.h"
#include "iha/rng.h"
#include "iha/status.h"
#include "test_util.h"

namespace iha {
namespace {

absl::StatusOr<int> Half(int x) {
  if (x % 2 != 0) return MakeError(ErrorCode::kInvalidArgument, "odd");
  return x / 2;
}

absl::StatusOr<int> Quarter(int x) {
  IHA_ASSIGN_OR_RETURN(int h, Half(x));
  IHA_ASSIGN_OR_RETURN(int q, Half(h));
  return q;
}

TEST(StatusTest, ErrorCodeRoundTripsThroughPayload) {
  const absl::Status s = MakeError(ErrorCode::kFormatError, "bad header");
  EXPECT_FALSE(s.ok());
  EXPECT_EQ(GetErrorCode(s), ErrorCode::kFormatError);
  EXPECT_TRUE(HasErrorCode(s, ErrorCode::kFormatError));
  EXPECT_FALSE(HasErrorCode(s, ErrorCode::kIoError));
  EXPECT_EQ(s.message(), "FormatError: bad header");
}

TEST(StatusTest, PlainStatusHasNoCode) {
  EXPECT_FALSE(GetErrorCode(absl::InternalError("x")).has_value());
  EXPECT_FALSE(GetErrorCode(absl::OkStatus()).has_value());
}

TEST(StatusTest, MacrosPropagate) {
  EXPECT_EQ(*Quarter(8), 2);
  EXPECT_TRUE(HasErrorCode(Quarter(6).status(), ErrorCode::kInvalidArgument));
}

TEST(IoTest, ByteReaderRoundTrip) {
  std::string buf = "MAGIC";
  AppendU64Le(buf, 0x0102030405060708ULL);
  AppendF64Le(buf, -1.25);
  EXPECT_EQ(static_cast<unsigned char>(buf[5]), 0x08);
  ByteReader r(buf);
  ASSERT_TRUE(r.ExpectMagic("MAGIC").ok());
  EXPECT_EQ(*r.ReadU64Le(), 0x0102030405060708ULL);
  EXPECT_EQ(*r.ReadF64Le(), -1.25);
  EXPECT_EQ(r.remaining(), 0u);
  EXPECT_TRUE(HasErrorCode(r.ReadU64Le().status(), ErrorCode::kFormatError));
}

TEST(IoTest, BigEndianU32) {
  const std::string buf("\x00\x00\x08\x03", 4);
  ByteReader r(buf);
  EXPECT_EQ(*r.ReadU32Be(), 0x00000803u);
}

TEST(IoTest, BadMagicIsFormatError) {
  ByteReader r("NOPE");
  EXPECT_TRUE(HasErrorCode(r.ExpectMagic("YEAH"), ErrorCode::kFormatError));
}

TEST(IoTest, AtomicWriteAndRead) {
  test::ScopedTempDir dir;
  const auto path = dir.path() / "a.bin";
  ASSERT_TRUE(WriteFileAtomic(path, "first").ok());
  ASSERT_TRUE(WriteFileAtomic(path, std::string("se\0cond", 7)).ok());
  EXPECT_EQ(*ReadFileBytes(path), std::string("se\0cond", 7));
  EXPECT_TRUE(HasErrorCode(ReadFileBytes(dir.path() / "none").status(),
                           ErrorCode::kMissingArtifact));
}

TEST(IoTest, Fnv1aKnownValues) {
  EXPECT_EQ(Fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(Fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(HexU64(0xabcULL), "0000000000000abc");
}

TEST(RngTest, CounterRngIsAPureFunctionOfSeedAndCounter) {
  CounterRng a(42);
  CounterRng b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.NextU64(), b.NextU64());
  CounterRng c(43);
  EXPECT_NE(CounterRng(42).NextU64(), c.NextU64());
}

TEST(RngTest, UnitAndGaussianMoments) {
  CounterRng rng(7);
  constexpr int kN = 200000;
  double su = 0.0;
  double sg = 0.0;
  double sg2 = 0.0;
  for (int i = 0; i < kN; ++i) {
    const double u = rng.NextUnit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double g = rng.NextGaussian();
    sg += g;
    sg2 += g * g;
  }
  // 5 standard errors.
  EXPECT_NEAR(su / kN, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / kN));
  EXPECT_NEAR(sg / kN, 0.0, 5.0 / std::sqrt(kN));
  EXPECT_NEAR(sg2 / kN, 1.0, 5.0 * std::sqrt(2.0 / kN));
}

TEST(RngTest, NextBelowStaysInRange) {
  CounterRng rng(1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.NextBelow(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(RngTest, CounterUniformDependsOnlyOnKeyAndCounter) {
  EXPECT_EQ(CounterUniform(3, 9), CounterUniform(3, 9));
  EXPECT_NE(CounterUniform(3, 9), CounterUniform(3, 10));
  EXPECT_NE(DeriveSeed(3, 1), DeriveSeed(3, 2));
}

TEST(RngTest, ShuffleIsAPermutation) {
  CounterRng rng(5);
  std::vector<std::size_t> v(50);
  std::iota(v.begin(), v.end(), 0);
  Shuffle(v, rng);
  std::vector<std::size_t> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(RngTest, SampleWithoutReplacementIsDistinct) {
  CounterRng rng(9);
  const std::vector<std::size_t> s = SampleWithoutReplacement(100, 40, rng);
  ASSERT_EQ(s.size(), 40u);
  const std::set<std::size_t> unique(s.begin(), s.end());
  EXPECT_EQ(unique.size(), 40u);
  EXPECT_LT(*unique.rbegin(), 100u);
  EXPECT_EQ(SampleWithoutReplacement(5, 5, rng).size(), 5u);
}

TEST(ParallelTest, RunsEveryIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  ASSERT_TRUE(ParallelFor(hits.size(), 4, [&](std::size_t i) {
                hits[i].fetch_add(1);
                return absl::OkStatus();
              }).ok());
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelTest, ReportsLowestFailingIndex) {
  const absl::Status s = ParallelFor(100, 3, [](std::size_t i) {
    if (i % 10 == 7) {
      return MakeError(ErrorCode::kInvalidArgument, std::to_string(i));
    }
    return absl::OkStatus();
  });
  EXPECT_EQ(s.message(), "InvalidArgument: 7");
}

TEST(ParallelTest, ZeroCountIsOk) {
  EXPECT_TRUE(ParallelFor(0, 2, [](std::size_t) {
                return absl::InternalError("never");
              }).ok());
  EXPECT_GE(DefaultThreadCount(), 1);
}

}  // namespace
}  // namespace iha
