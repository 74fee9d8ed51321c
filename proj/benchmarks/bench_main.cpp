// Copyright 2026 The essencekit Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "essencekit/evaluation.hpp"
#include "essencekit/losses.hpp"
#include "essencekit/optimizer.hpp"
#include "essencekit/profiles.hpp"
#include "essencekit/toy_backends.hpp"

using namespace essencekit;

namespace {

LatentCode latent(const Generator& g, std::uint64_t seed) {
  return LatentCode(g.latent_shape(), toy::standard_normal(g.latent_shape().size(), 1, seed).col(0), g.space_id());
}

std::vector<LatentCode> pool(const Generator& g, std::size_t n) {
  std::vector<LatentCode> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(latent(g, 100 + i));
  return out;
}

void BM_ObjectiveWithGradient(benchmark::State& state) {
  const auto b = make_backends(builtin_profiles().front());
  const auto& g = *b.generator;
  const SourceBatch batch(pool(g, static_cast<std::size_t>(state.range(0))), "bench");
  const Objective obj(g, *b.encoder, g.decode(latent(g, 1)), batch, LossWeights{});
  const Vector essence = toy::standard_normal(g.latent_shape().size(), 1, 2).col(0);
  Vector grad;
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(essence, &grad));
}
BENCHMARK(BM_ObjectiveWithGradient)->Arg(2)->Arg(4)->Arg(8);

void BM_OptimizeEssence(benchmark::State& state) {
  const auto b = make_backends(builtin_profiles().front());
  const auto& g = *b.generator;
  const SourceBatch batch(pool(g, 4), "bench");
  const auto target = g.decode(latent(g, 1));
  const OptimizerConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(optimize_essence(target, batch, g, *b.encoder, nullptr, cfg));
}
BENCHMARK(BM_OptimizeEssence)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  const Matrix x = toy::standard_normal(4 * f, f, 1);
  const Matrix y = toy::standard_normal(4 * f, f, 2);
  for (auto _ : state) benchmark::DoNotOptimize(fid(x, y));
}
BENCHMARK(BM_Fid)->Arg(8)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
