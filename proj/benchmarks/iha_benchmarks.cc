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

#include <cstddef>
#include <vector>

#include "benchmark/benchmark.h"
#include "iha/attacks.h"
#include "iha/data.h"
#include "iha/linalg.h"
#include "iha/model.h"
#include "iha/rng.h"

namespace iha {
namespace {

Matrix RandomSpdMatrix(int dim, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix a(dim, dim);
  for (int j = 0; j < dim; ++j) {
    for (int i = 0; i < dim; ++i) a(i, j) = rng.NextGaussian();
  }
  return a * a.transpose() / dim + 0.1 * Matrix::Identity(dim, dim);
}

void BM_SymEigendecompose(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const SymMatrix m = *SymMatrix::FromFull(RandomSpdMatrix(dim, 1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(SymEigendecompose(m));
  }
}
BENCHMARK(BM_SymEigendecompose)->Arg(64)->Arg(256)->Arg(500);

void BM_CgSolve(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const Matrix a = RandomSpdMatrix(dim, 2);
  const Vector b = Vector::Ones(dim);
  const LinearOperator op = [&](const Vector& v) { return Vector(a * v); };
  for (auto _ : state) {
    benchmark::DoNotOptimize(CgSolve(op, b, CgOptions{0.2, 1e-10, 5000}));
  }
}
BENCHMARK(BM_CgSolve)->Arg(64)->Arg(256)->Arg(500);

struct Instance {
  ModelSpec spec;
  Dataset data;
  MembershipMask mask;
  ParameterVector w;
};

Instance MakeInstance(int hidden) {
  Instance in;
  in.spec = ModelSpec::Mlp(30, {hidden}, 5, LossKind::kCrossEntropy);
  in.data = *SynthTabular(3, 400, 30, 5, 0.5);
  in.mask = *BernoulliSplit(in.data, 0.5, 1);
  in.w = InitParameters(in.spec, 4);
  return in;
}

void BM_ExactHessian(benchmark::State& state) {
  const Instance in = MakeInstance(static_cast<int>(state.range(0)));
  const std::vector<Record> members =
      SelectRecords(in.data, in.mask.Members());
  for (auto _ : state) {
    benchmark::DoNotOptimize(ExactHessian(in.spec, in.w, members));
  }
  state.counters["params"] = static_cast<double>(in.spec.ParameterCount());
}
BENCHMARK(BM_ExactHessian)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_IhaTerms(benchmark::State& state) {
  const Instance in = MakeInstance(16);
  const HessianMode mode =
      state.range(0) == 0 ? HessianMode::kExactHessian : HessianMode::kHvpOnly;
  const TargetContext ctx =
      *PrepareTargetContext(in.spec, in.w, in.data, in.mask, mode);
  IhaConfig cfg;
  cfg.n = ctx.n();
  const IhaScorer scorer = *IhaScorer::Create(ctx, cfg);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(scorer.Terms(in.data.records[i], i));
    i = (i + 1) % in.data.size();
  }
  state.SetLabel(mode == HessianMode::kExactHessian ? "exact" : "cg");
}
BENCHMARK(BM_IhaTerms)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace iha

BENCHMARK_MAIN();
