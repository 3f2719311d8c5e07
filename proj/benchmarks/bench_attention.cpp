#include <benchmark/benchmark.h>

#include "pathohr/model/encoder_stack.hpp"
#include "pathohr/numeric/rng.hpp"

using namespace pathohr;

namespace {

TokenSet random_tokens(std::size_t n, std::size_t d, std::uint64_t seed) {
  Matrix x(n, d);
  RngStream rng(seed, 0);
  for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
  return TokenSet::from_features(std::move(x));
}

// Wall time of one multi-query attention call; the MAC counter is reported
// alongside so time per MAC can be compared across sizes.
void BM_MultiQueryAttention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64, heads = 4;
  ParameterSet params;
  RngStream rng(1, 0);
  add_mqa_params(params, "mqa.", d, heads, rng);
  const TokenSet tokens = random_tokens(n, d, 2);
  for (auto _ : state) benchmark::DoNotOptimize(multi_query_attention(tokens, params, "mqa.", heads));
  state.counters["macs"] = static_cast<double>(count_attention_macs(n, d, heads));
}
BENCHMARK(BM_MultiQueryAttention)->RangeMultiplier(2)->Range(64, 1024)->Unit(benchmark::kMillisecond);

void BM_CountAttentionMacs(benchmark::State& state) {
  std::size_t n = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(count_attention_macs(n, 64, 4));
    n = n % 8192 + 1;
  }
}
BENCHMARK(BM_CountAttentionMacs);

}  // namespace
