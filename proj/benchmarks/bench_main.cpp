#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "trustrec/backbone.hpp"
#include "trustrec/corpus.hpp"
#include "trustrec/rectifier.hpp"

using namespace trustrec;

namespace {

Matrix<double> unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Matrix<double> m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0;
    for (std::size_t c = 0; c < d; ++c) {
      m(i, c) = nd(gen);
      norm += m(i, c) * m(i, c);
    }
    for (std::size_t c = 0; c < d; ++c) m(i, c) /= std::sqrt(norm);
  }
  return m;
}

void BM_Affinity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto anchors = anchors_from_embeddings(unit_rows(n, 64, 1));
  const auto z = unit_rows(n, 64, 2);
  for (auto _ : state) benchmark::DoNotOptimize(build_affinity(anchors, z, 20, 0.1));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}
BENCHMARK(BM_Affinity)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Sinkhorn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto anchors = anchors_from_embeddings(unit_rows(n, 64, 3));
  const auto aff = build_affinity(anchors, unit_rows(n, 64, 4), 20, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn(aff));
}
BENCHMARK(BM_Sinkhorn)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_Propagate(benchmark::State& state) {
  SynthSpec spec;
  spec.num_users = static_cast<std::size_t>(state.range(0));
  spec.num_items = spec.num_users / 2;
  const auto data = synth_generate(spec, 5);
  auto model = init_embeddings<float>(ModelKind::lightgcn, spec.num_users, spec.num_items, 64, 2, 1);
  model.adjacency = build_norm_adjacency(data.split.train());
  for (auto _ : state) {
    propagate(model);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_Propagate)->Arg(800)->Arg(8000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
