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

#pragma once

#include <random>
#include <vector>

#include "compexp/tensor.hpp"

namespace compexp {

/// Inputs of the prototype-extraction distribution: candidate sentence
/// encodings from the item profile and transformed reference vectors from the
/// user profile. Candidates never carry ratings here; the comparison signal
/// enters only through the references.
struct ExtractionContext {
  std::vector<Tensor> candidates;  // n vectors, each (T)
  std::vector<Tensor> references;  // m vectors h_i, each (T)
  double kappa = 3.0;              // concentration; 0 allowed (uniform), negative rejected
};

/// logit_j = logsumexp_i(kappa * cos(x_j, h_i)); the direction-distribution
/// normalizer is constant across candidates and omitted.
Tensor extraction_logits(const ExtractionContext& ctx);

/// Softmax of the logits over candidates.
Tensor extraction_distribution(const ExtractionContext& ctx);

enum class SampleMode { kSample, kArgmax };

struct PrototypeChoice {
  std::size_t index = 0;
  double log_prob = 0.0;
};

/// Draws (training) or argmaxes (evaluation) a candidate; argmax ties break
/// to the lowest index.
PrototypeChoice sample_prototype(const std::vector<double>& probabilities, SampleMode mode,
                                 std::mt19937_64& rng);

/// -log P_ext(target) as a graph scalar.
Tensor extractor_nll(const ExtractionContext& ctx, std::size_t target_index);

}  // namespace compexp
