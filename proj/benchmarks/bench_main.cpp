// Copyright 2026 The eskmeans Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "eskm/besgmm.hpp"
#include "eskm/corpus.hpp"
#include "eskm/embedding.hpp"
#include "eskm/eskmeans.hpp"

namespace {

using namespace eskm;

Corpus bench_corpus(int n_utterances) {
  SynthConfig cfg;
  cfg.vocab_size = 8;
  cfg.n_utterances = n_utterances;
  cfg.distractor_landmark_rate = 0.5;
  cfg.seed = 7;
  return generate_synthetic(cfg);
}

EmbeddingCache bench_cache(const Corpus& corpus, int workers) {
  EmbedConfig cfg;
  cfg.min_frames = 10;
  return build_cache(corpus, cfg, workers);
}

void BM_BuildCache(benchmark::State& state) {
  const Corpus corpus = bench_corpus(100);
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    EmbedConfig cfg;
    cfg.min_frames = 10;
    benchmark::DoNotOptimize(build_cache(corpus, cfg, workers));
  }
}
BENCHMARK(BM_BuildCache)->Arg(1)->Arg(4);

// One full fit at a small epoch budget; the per-epoch cost is the headline.
void BM_EskmeansEpoch(benchmark::State& state) {
  const Corpus corpus = bench_corpus(static_cast<int>(state.range(0)));
  const EmbeddingCache cache = bench_cache(corpus, 4);
  EskmConfig cfg;
  cfg.k = 50;
  cfg.n_epochs = 5;
  cfg.seed = 11;
  for (auto _ : state) {
    FitResult res = fit(cache, cfg);
    benchmark::DoNotOptimize(res.trace.back().objective);
  }
}
BENCHMARK(BM_EskmeansEpoch)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_BesgmmSweep(benchmark::State& state) {
  const Corpus corpus = bench_corpus(static_cast<int>(state.range(0)));
  const EmbeddingCache cache = bench_cache(corpus, 4);
  BesgmmConfig cfg;
  cfg.k = 50;
  cfg.n_sweeps = 5;
  cfg.seed = 11;
  for (auto _ : state) {
    BesFitResult res = bes_fit(cache, cfg);
    benchmark::DoNotOptimize(res.trace.back());
  }
}
BENCHMARK(BM_BesgmmSweep)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
