#include <benchmark/benchmark.h>

#include "evchain/chains.hpp"
#include "evchain/nn.hpp"
#include "evchain/salience.hpp"

namespace {

using namespace evchain;

TemporalGraph random_dag(int n, double density, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<int> nodes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) nodes[static_cast<std::size_t>(i)] = i;
  TemporalGraph g(nodes);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.bernoulli(density)) g.add_edge(i, j);
    }
  }
  return g;
}

void BM_ExtractChains(benchmark::State& state) {
  const TemporalGraph g = random_dag(static_cast<int>(state.range(0)), 0.2, 3);
  for (auto _ : state) benchmark::DoNotOptimize(extract_chains(g));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ExtractChains)->RangeMultiplier(2)->Range(8, 128)->Complexity();

void BM_RepairConsistency(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  nn::Rng rng(5);
  std::vector<int> nodes;
  for (int i = 0; i < n; ++i) nodes.push_back(i);
  std::vector<ScoredEdge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && rng.bernoulli(0.3)) edges.push_back({i, j, rng.uniform()});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(repair_consistency(nodes, edges));
}
BENCHMARK(BM_RepairConsistency)->RangeMultiplier(2)->Range(8, 64);

void BM_KernelFeatures(benchmark::State& state) {
  nn::Rng rng(7);
  const int dim = 32;
  auto vec = [&] {
    nn::Vector v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.uniform(-1.0, 1.0);
    return v;
  };
  const nn::Vector target = vec();
  std::vector<nn::Vector> neighbors;
  for (int i = 0; i < state.range(0); ++i) neighbors.push_back(vec());
  const KernelBank bank = KernelBank::standard();
  for (auto _ : state) benchmark::DoNotOptimize(kernel_features(target, neighbors, bank));
}
BENCHMARK(BM_KernelFeatures)->RangeMultiplier(4)->Range(4, 256);

void BM_EncodeSequence(benchmark::State& state) {
  nn::ParameterSet params;
  nn::Rng rng(11);
  const nn::RecurrentEncoder enc = nn::RecurrentEncoder::create(params, "enc", 32, 32);
  params.init_uniform(rng, 0.08);
  std::vector<nn::Vector> inputs;
  for (int i = 0; i < state.range(0); ++i) inputs.push_back(nn::Vector::Random(32));
  for (auto _ : state) {
    nn::Graph g;
    std::vector<nn::Expr> xs;
    for (const nn::Vector& x : inputs) xs.push_back(g.input(x));
    benchmark::DoNotOptimize(enc.encode(g, xs));
  }
}
BENCHMARK(BM_EncodeSequence)->RangeMultiplier(2)->Range(8, 64);

}  // namespace

BENCHMARK_MAIN();
