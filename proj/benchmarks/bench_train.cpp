#include <benchmark/benchmark.h>

#include "hyb/loss.hpp"
#include "hyb/model.hpp"
#include "hyb/optim.hpp"

namespace {

// Full training step (forward, loss, backward, update) on a small hybrid.
void bench_train_step(benchmark::State& state) {
  const int64_t B = 4, T = state.range(0);
  hyb::ModelDims dims;
  dims.vocab = 256;
  dims.d = 64;
  dims.n = 16;
  dims.heads = 4;
  dims.window = 32;
  dims.blocks = 2;
  auto model = hyb::build_model<float>("MSF", dims, 1);
  hyb::AdamWState<float> opt;
  opt.init(model, {});

  hyb::Rng rng(2);
  hyb::Tensor<int32_t> tokens({B, T}), targets({B, T});
  for (int64_t i = 0; i < tokens.size(); ++i) {
    tokens[i] = static_cast<int32_t>(rng.uniform_int(256));
    targets[i] = static_cast<int32_t>(rng.uniform_int(256));
  }

  for (auto _ : state) {
    hyb::ModelCache<float> cache;
    auto logits = hyb::model_forward(model, tokens, {}, nullptr, &cache);
    hyb::Tensor<float> dlogits;
    double loss = hyb::cross_entropy(logits, targets, &dlogits);
    benchmark::DoNotOptimize(loss);
    auto grads = hyb::grad_shell(model);
    hyb::model_backward(model, cache, dlogits, grads);
    opt.apply(model, grads, 1e-4);
  }
  state.SetItemsProcessed(state.iterations() * B * T);
}
BENCHMARK(bench_train_step)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
