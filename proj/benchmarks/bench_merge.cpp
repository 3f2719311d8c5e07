#include <benchmark/benchmark.h>

#include "pathohr/merge/token_merge.hpp"
#include "pathohr/numeric/rng.hpp"

using namespace pathohr;

namespace {

TokenSet grid_tokens(std::size_t n, std::size_t d) {
  Matrix x(n, d);
  RngStream rng(3, 0);
  for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
  TokenSet t = TokenSet::from_features(std::move(x));
  for (std::size_t i = 0; i < n; ++i) t.positions.push_back({static_cast<int>(i / 32), static_cast<int>(i % 32)});
  return t;
}

void BM_AtmMerge(benchmark::State& state) {
  const TokenSet tokens = grid_tokens(static_cast<std::size_t>(state.range(0)), 32);
  MergeConfig mc;
  mc.target_tokens = 64;
  SimilarityConfig sc;
  sc.method = static_cast<SimilarityMethod>(state.range(1));
  const SemanticProjector proj = make_semantic_projector(32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(atm_merge(tokens, mc, sc, &proj));
  state.SetLabel(std::string(to_string(sc.method)));
}
BENCHMARK(BM_AtmMerge)
    ->ArgsProduct({{256, 1024},
                   {static_cast<int>(SimilarityMethod::pooled_attention), static_cast<int>(SimilarityMethod::cosine),
                    static_cast<int>(SimilarityMethod::semantic)}})
    ->Unit(benchmark::kMillisecond);

void BM_TomeMerge(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const TokenSet tokens = grid_tokens(n, 32);
  for (auto _ : state) benchmark::DoNotOptimize(tome_merge(tokens, n / 2));
}
BENCHMARK(BM_TomeMerge)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
