#include <benchmark/benchmark.h>

#include "pbooth/diffusion/sampler.h"
#include "pbooth/nn/layers.h"
#include "pbooth/pipeline/model_bundle.h"

using namespace pbooth;
using nn::Tensor;
using nn::Var;

namespace {

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nn::Rng rng(1);
  const auto a = rng.NormalTensor<float>({n, n});
  const auto b = rng.NormalTensor<float>({n, n});
  Tensor<float> out = Tensor<float>::Matrix(n, n);
  for (auto _ : state) {
    nn::Gemm(a, false, b, false, out, false);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

void BM_AttentionForwardBackward(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  nn::Rng rng(2);
  nn::MultiHeadAttention<float> attn("attn", 64, 4, rng);
  nn::ParameterList<float> params;
  attn.CollectParameters(params);
  const auto x = rng.NormalTensor<float>({frames, 64});
  for (auto _ : state) {
    nn::Graph<float> g;
    const auto loss = nn::Sum(attn.SelfAttention(g, Var<float>::Constant(x)));
    g.Backward(loss);
    g.AccumulateGrads();
    benchmark::DoNotOptimize(params.front()->grad.data());
  }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(32)->Arg(64);

void BM_DenoiserForward(benchmark::State& state) {
  pipeline::RunConfig config;
  pipeline::ModelBundle models(config);
  nn::Rng rng(3);
  const auto x = rng.NormalTensor<float>({48, data::kChannels});
  diffusion::Conditions<float> cond;
  cond.text = Var<float>::Constant(rng.NormalTensor<float>({1, config.d_clip}));
  cond.v_star = Var<float>::Constant(rng.NormalTensor<float>({49, config.d_model}));
  for (auto& a : models.denoiser.adapters()) a.gate().gamma().value[0] = 0.1f;
  for (auto _ : state) {
    nn::Graph<float> g(false);
    benchmark::DoNotOptimize(models.denoiser.Forward(g, x, 10, cond).value().data());
  }
}
BENCHMARK(BM_DenoiserForward);

// One guided sampling step: three denoiser passes plus the posterior update.
void BM_GuidedSampleStep(benchmark::State& state) {
  pipeline::RunConfig config;
  pipeline::ModelBundle models(config);
  const auto schedule = config.Schedule();
  nn::Rng rng(4);
  diffusion::SamplingConditions cond;
  cond.text = rng.NormalTensor<float>({1, config.d_clip});
  cond.v_star = rng.NormalTensor<float>({49, config.d_model});
  const auto x = rng.NormalTensor<float>({48, data::kChannels});
  const auto noise = rng.NormalTensor<float>({48, data::kChannels});
  for (auto _ : state) {
    const auto x0 = diffusion::CfgPredict(models.denoiser, x, 25, cond, config.guidance);
    benchmark::DoNotOptimize(diffusion::PosteriorStep(x, x0, 25, noise, schedule).data());
  }
}
BENCHMARK(BM_GuidedSampleStep);

}  // namespace
BENCHMARK_MAIN();
