// Copyright 2026 The compexp Authors.
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

#include <vector>

#include "compexp/extractor.hpp"
#include "compexp/metrics.hpp"
#include "compexp/model.hpp"
#include "compexp/rng.hpp"

namespace {

using namespace compexp;

ModelConfig bench_config() {
  ModelConfig cfg;
  cfg.dims.vocab = 200;
  cfg.dims.embed = 64;
  cfg.dims.hidden = 64;
  cfg.dims.rating_embed = 16;
  cfg.dims.text_dim = 64;
  cfg.dims.r_max = 4;
  return cfg;
}

std::vector<int> random_sentence(std::mt19937_64& rng, std::size_t len) {
  std::vector<int> s(len);
  for (auto& t : s) t = 4 + static_cast<int>(bounded_uint(rng, 196));
  return s;
}

void BM_EncodeSentence(benchmark::State& state) {
  Model model = Model::init(bench_config(), 7);
  auto rng = make_rng(11);
  const std::vector<int> sentence = random_sentence(rng, 12);
  NoGradGuard no_grad;
  for (auto _ : state)
    benchmark::DoNotOptimize(model.encoder.encode_sentence(sentence).pooled.values());
}
BENCHMARK(BM_EncodeSentence);

void BM_ExtractionDistribution(benchmark::State& state) {
  Model model = Model::init(bench_config(), 7);
  auto rng = make_rng(13);
  NoGradGuard no_grad;
  ExtractionContext ctx;
  for (int i = 0; i < 10; ++i)
    ctx.candidates.push_back(model.encoder.encode_sentence(random_sentence(rng, 12)).pooled);
  for (int i = 0; i < 10; ++i) {
    const Tensor pooled = model.encoder.encode_sentence(random_sentence(rng, 12)).pooled;
    const Tensor diff = model.encoder.encode_rating_diff(static_cast<int>(i % 9) - 4);
    ctx.references.push_back(model.encoder.transform_reference(pooled, diff));
  }
  for (auto _ : state)
    benchmark::DoNotOptimize(extraction_distribution(ctx).values());
}
BENCHMARK(BM_ExtractionDistribution);

void BM_IdfBleu(benchmark::State& state) {
  auto rng = make_rng(17);
  std::vector<LabeledSentence> train(50);
  for (auto& s : train) s.tokens = random_sentence(rng, 10);
  const IdfTable idf = IdfTable::build(train);
  const std::vector<int> candidate = random_sentence(rng, 12);
  const std::vector<std::vector<int>> refs = {random_sentence(rng, 12),
                                              random_sentence(rng, 9),
                                              random_sentence(rng, 14)};
  const BleuWeights weights = BleuWeights::uniform(2);
  for (auto _ : state)
    benchmark::DoNotOptimize(idf_bleu(candidate, refs, idf, weights));
}
BENCHMARK(BM_IdfBleu);

void BM_ExtractorTrainStep(benchmark::State& state) {
  Model model = Model::init(bench_config(), 7);
  auto rng = make_rng(19);
  std::vector<std::vector<int>> cand_tokens, ref_tokens;
  for (int i = 0; i < 8; ++i) cand_tokens.push_back(random_sentence(rng, 12));
  for (int i = 0; i < 8; ++i) ref_tokens.push_back(random_sentence(rng, 12));
  AdamConfig adam;
  for (auto _ : state) {
    ExtractionContext ctx;
    for (const auto& t : cand_tokens)
      ctx.candidates.push_back(model.encoder.encode_sentence(t).pooled);
    for (std::size_t i = 0; i < ref_tokens.size(); ++i) {
      const Tensor pooled = model.encoder.encode_sentence(ref_tokens[i]).pooled;
      const Tensor diff = model.encoder.encode_rating_diff(static_cast<int>(i % 9) - 4);
      ctx.references.push_back(model.encoder.transform_reference(pooled, diff));
    }
    backward(extractor_nll(ctx, 3));
    model.store.clip_grads(5.0);
    model.store.adam_step(adam);
    model.store.zero_grads();
  }
}
BENCHMARK(BM_ExtractorTrainStep);

}  // namespace

BENCHMARK_MAIN();
