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

#include "compexp/extractor.hpp"

#include <cmath>
#include <stdexcept>

#include "compexp/rng.hpp"

namespace compexp {

namespace {

void check_context(const ExtractionContext& ctx) {
  if (ctx.candidates.empty()) throw std::invalid_argument("extraction: no candidates");
  if (ctx.references.empty()) throw std::invalid_argument("extraction: no references");
  if (ctx.kappa < 0.0) throw std::invalid_argument("extraction: negative kappa");
}

}  // namespace

Tensor extraction_logits(const ExtractionContext& ctx) {
  check_context(ctx);
  std::vector<Tensor> logits;
  logits.reserve(ctx.candidates.size());
  for (const Tensor& cand : ctx.candidates) {
    std::vector<Tensor> scaled;
    scaled.reserve(ctx.references.size());
    for (const Tensor& ref : ctx.references)
      scaled.push_back(scale(cosine_similarity(cand, ref), ctx.kappa));
    logits.push_back(logsumexp(concat(std::span<const Tensor>(scaled))));
  }
  return concat(std::span<const Tensor>(logits));
}

Tensor extraction_distribution(const ExtractionContext& ctx) {
  return softmax(extraction_logits(ctx), 0);
}

PrototypeChoice sample_prototype(const std::vector<double>& probabilities, SampleMode mode,
                                 std::mt19937_64& rng) {
  if (probabilities.empty()) throw std::invalid_argument("sample_prototype: empty distribution");
  PrototypeChoice choice;
  if (mode == SampleMode::kArgmax) {
    for (std::size_t i = 1; i < probabilities.size(); ++i)
      if (probabilities[i] > probabilities[choice.index]) choice.index = i;
  } else {
    choice.index = sample_index(probabilities, rng);
  }
  choice.log_prob = std::log(probabilities[choice.index]);
  return choice;
}

Tensor extractor_nll(const ExtractionContext& ctx, std::size_t target_index) {
  if (target_index >= ctx.candidates.size())
    throw std::out_of_range("extractor_nll: target index " + std::to_string(target_index) +
                            " outside candidate pool of size " +
                            std::to_string(ctx.candidates.size()));
  const Tensor log_probs = log_softmax(extraction_logits(ctx), 0);
  return scale(pick(log_probs, target_index), -1.0);
}

}  // namespace compexp
