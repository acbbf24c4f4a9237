#include <benchmark/benchmark.h>

#include "hyb/attention.hpp"
#include "hyb/ff.hpp"
#include "hyb/rng.hpp"
#include "hyb/ssm.hpp"

namespace {

hyb::Tensor<float> rand_input(int64_t B, int64_t T, int64_t d, uint64_t seed) {
  hyb::Rng rng(seed);
  hyb::Tensor<float> x({B, T, d});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.normal());
  return x;
}

void bench_ssm_scan(benchmark::State& state) {
  const int64_t T = state.range(0), d = 64, n = 16;
  auto p = hyb::make_ssm_selective<float>(d, n);
  hyb::Rng rng(1);
  for (int64_t i = 0; i < p.a_log.size(); ++i) p.a_log[i] = -1.0f;
  for (auto* t : {&p.b_w, &p.c_w})
    for (int64_t i = 0; i < t->size(); ++i) (*t)[i] = static_cast<float>(rng.normal() * 0.05);
  for (int64_t i = 0; i < p.dt_w.size(); ++i) p.dt_w[i] = static_cast<float>(rng.normal() * 0.05);
  auto x = rand_input(1, T, d, 2);
  hyb::Tensor<float> y;
  for (auto _ : state) {
    hyb::ssm_forward(p, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(bench_ssm_scan)->Arg(256)->Arg(1024);

void bench_swa(benchmark::State& state) {
  const int64_t T = state.range(0), d = 64, w = 64;
  auto p = hyb::make_attn<float>(d, 4, w);
  hyb::Rng rng(3);
  for (auto* t : {&p.wq, &p.wk, &p.wv, &p.wo})
    for (int64_t i = 0; i < t->size(); ++i) (*t)[i] = static_cast<float>(rng.normal() * 0.05);
  auto x = rand_input(1, T, d, 4);
  hyb::Tensor<float> y;
  for (auto _ : state) {
    hyb::swa_forward(p, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(bench_swa)->Arg(256)->Arg(1024);

void bench_hidden_attention(benchmark::State& state) {
  const int64_t T = state.range(0), d = 32, n = 8;
  auto p = hyb::make_ssm_selective<float>(d, n);
  hyb::Rng rng(5);
  for (int64_t i = 0; i < p.a_log.size(); ++i) p.a_log[i] = -1.0f;
  for (auto* t : {&p.b_w, &p.c_w})
    for (int64_t i = 0; i < t->size(); ++i) (*t)[i] = static_cast<float>(rng.normal() * 0.05);
  for (int64_t i = 0; i < p.dt_w.size(); ++i) p.dt_w[i] = static_cast<float>(rng.normal() * 0.05);
  hyb::Rng xr(6);
  hyb::Tensor<float> x({T, d});
  for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(xr.normal());
  for (auto _ : state) {
    auto alpha = hyb::ssm_hidden_attention(p, x, 0);
    benchmark::DoNotOptimize(alpha.data());
  }
}
BENCHMARK(bench_hidden_attention)->Arg(128)->Arg(512);

void bench_ff(benchmark::State& state) {
  const int64_t T = state.range(0), d = 64;
  hyb::FfParams<float> p;
  p.w1 = hyb::Tensor<float>({4 * d, d});
  p.w2 = hyb::Tensor<float>({d, 4 * d});
  hyb::Rng rng(7);
  for (auto* t : {&p.w1, &p.w2})
    for (int64_t i = 0; i < t->size(); ++i) (*t)[i] = static_cast<float>(rng.normal() * 0.05);
  auto x = rand_input(1, T, d, 8);
  hyb::Tensor<float> y;
  for (auto _ : state) {
    hyb::ff_forward(p, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(bench_ff)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
