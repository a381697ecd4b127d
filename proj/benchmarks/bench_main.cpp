/* Copyright 2026 The licbd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "licbd/codec.hpp"
#include "licbd/dct.hpp"
#include "licbd/trigger.hpp"

using namespace licbd;

namespace {

void BM_BlockDctRoundTrip(benchmark::State& state) {
  torch::manual_seed(0);
  const auto x = torch::rand({8, 3, state.range(0), state.range(0)});
  for (auto _ : state) {
    auto back = block_idct(block_dct(x, 16));
    benchmark::DoNotOptimize(back.data_ptr<float>());
  }
  state.SetItemsProcessed(state.iterations() * x.size(0));
}
BENCHMARK(BM_BlockDctRoundTrip)->Arg(64)->Arg(256);

void BM_TriggerInject(benchmark::State& state) {
  torch::manual_seed(0);
  torch::NoGradGuard no_grad;
  TriggerGenerator trigger;
  const auto x = torch::rand({8, 3, state.range(0), state.range(0)});
  for (auto _ : state) {
    auto p = trigger->inject(x, ClipMode::kClip);
    benchmark::DoNotOptimize(p.x_p.data_ptr<float>());
  }
  state.SetItemsProcessed(state.iterations() * x.size(0));
}
BENCHMARK(BM_TriggerInject)->Arg(64)->Arg(256);

void BM_CodecForward(benchmark::State& state) {
  torch::manual_seed(0);
  torch::NoGradGuard no_grad;
  CodecConfig config;
  config.hidden_channels = state.range(0);
  HyperpriorCodec codec(config);
  codec->eval();
  const auto x = torch::rand({8, 3, 64, 64});
  for (auto _ : state) {
    auto r = codec->forward(x, QuantMode::kEvalRound);
    benchmark::DoNotOptimize(r.x_hat.data_ptr<float>());
  }
  state.SetItemsProcessed(state.iterations() * x.size(0));
}
BENCHMARK(BM_CodecForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_CodecTrainStep(benchmark::State& state) {
  torch::manual_seed(0);
  CodecConfig config;
  config.hidden_channels = state.range(0);
  HyperpriorCodec codec(config);
  const auto x = torch::rand({8, 3, 64, 64});
  for (auto _ : state) {
    codec->zero_grad();
    auto loss = codec->rd_loss(x).total;
    loss.backward();
    benchmark::DoNotOptimize(loss.item<double>());
  }
}
BENCHMARK(BM_CodecTrainStep)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
