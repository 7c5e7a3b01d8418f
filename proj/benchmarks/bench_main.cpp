#include <benchmark/benchmark.h>

#include "tnfn/contract.hpp"
#include "tnfn/nfn_layers.hpp"
#include "tnfn/nfn_model.hpp"
#include "tnfn/trainer.hpp"

using namespace tnfn;

static void BM_ContractMatmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = rng_gaussian(1, {n, n}), b = rng_gaussian(2, {n, n});
  const auto spec = ContractionSpec::parse("ij,jk->ik");
  const Tensor* in[] = {&a, &b};
  for (auto _ : state) benchmark::DoNotOptimize(contract(spec, in));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ContractMatmul)->RangeMultiplier(2)->Range(8, 64)->Complexity(benchmark::oNCubed);

static void BM_ContractFiveIndex(benchmark::State& state) {
  const std::size_t D = static_cast<std::size_t>(state.range(0));
  const Tensor x = rng_gaussian(1, {4, 2, 2, D, D}), p = rng_gaussian(2, {2, 2, D, D, D});
  for (auto _ : state) benchmark::DoNotOptimize(contract("bdhpq,edkpq->bek", x, p));
}
BENCHMARK(BM_ContractFiveIndex)->Arg(8)->Arg(16);

static void BM_EquivariantHeads(benchmark::State& state) {
  const BlockDims dims{static_cast<std::size_t>(state.range(0)), 16, 8, 8, 32};
  auto p = EquivariantParams::zeros(2, 2, 16);
  Rng rng(1);
  init_params(rng, p, dims);
  MultiChannelWeights u{dims, {random_block(1, dims), random_block(2, dims)}};
  for (auto _ : state) benchmark::DoNotOptimize(equivariant_forward(p, u));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_EquivariantHeads)->RangeMultiplier(2)->Range(1, 8)->Complexity(benchmark::oN);

static void BM_InvariantLayer(benchmark::State& state) {
  const BlockDims dims{2, 16, 8, 8, 32};
  auto p = InvariantParams::zeros(10, 1, 16, 10);
  Rng rng(1);
  init_params(rng, p, dims);
  MultiChannelWeights u{dims, {}};
  for (int c = 0; c < 10; ++c) u.channels.push_back(random_block(c, dims));
  for (auto _ : state) benchmark::DoNotOptimize(invariant_forward(p, u));
}
BENCHMARK(BM_InvariantLayer);

static void BM_AttnForward(benchmark::State& state) {
  const BlockDims dims{2, 16, 8, 8, 32};
  const auto w = random_block(1, dims);
  const Tensor x = rng_gaussian(2, {16, 16});
  for (auto _ : state) benchmark::DoNotOptimize(attn_forward(x, w));
}
BENCHMARK(BM_AttnForward);

static void BM_NfnTrainStep(benchmark::State& state) {
  const BlockDims dims{2, 16, 8, 8, 32};
  std::vector<WeightSample> data;
  for (std::size_t i = 0; i < static_cast<std::size_t>(state.range(0)); ++i) {
    WeightSample s;
    s.blocks = {random_block(10 * i, dims, 0.3), random_block(10 * i + 1, dims, 0.3)};
    s.embedding = rng_gaussian(10 * i + 2, {1, 128});
    s.classifier = rng_gaussian(10 * i + 3, {1, 340});
    s.target = 0.5;
    data.push_back(s);
  }
  NfnModel m(NfnConfig{}, InputLayout::of(data[0]), 1);
  std::vector<const WeightSample*> batch;
  for (const auto& s : data) batch.push_back(&s);
  for (auto _ : state) benchmark::DoNotOptimize(backward(m, batch, LossKind::bce));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NfnTrainStep)->Arg(16);

BENCHMARK_MAIN();
