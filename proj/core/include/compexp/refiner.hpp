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

#include "compexp/encoder.hpp"
#include "compexp/params.hpp"
#include "compexp/tensor.hpp"

namespace compexp {

/// Closed-form ascent direction of the extraction probability at x:
/// z = sum_i exp(kappa cos(x, h_i)) * (h_i/(|x||h_i|) - cos(x, h_i) x/|x|^2).
/// Positive scalar factors are dropped; only the direction matters. An empty
/// reference set yields z = 0 (nothing to climb).
std::vector<double> refine_direction(const std::vector<double>& x,
                                     const std::vector<std::vector<double>>& references,
                                     double kappa);

/// Unit step: x + z/|z| when |z| > 1e-8, otherwise x unchanged.
std::vector<double> apply_refinement(const std::vector<double>& x,
                                     const std::vector<double>& z);

enum class DecodeMode { kGreedy, kSample };

struct DecodeResult {
  std::vector<int> tokens;  // emitted content tokens, eos excluded
  double log_prob = 0.0;    // sum of chosen-step log-probabilities (incl. eos)
  Tensor log_prob_graph;    // same sum as a graph scalar, for policy gradients
};

/// Single-layer GRU decoder with multiplicative attention over the prototype
/// token states. The refined vector enters through a learned linear+tanh
/// bridge that forms the initial hidden state.
class DecoderNet {
 public:
  static void register_params(ParamStore& store, const ModelDims& dims, std::mt19937_64& rng);

  DecoderNet(const ParamStore& store, const ModelDims& dims);

  const ModelDims& dims() const { return dims_; }

  Tensor initial_hidden(const Tensor& refined) const;

  struct Step {
    Tensor logits;  // (V), unnormalized
    Tensor hidden;  // (H)
    Tensor attn;    // weights over prototype tokens, sums to 1
  };
  /// One decode step conditioned on the previous token.
  Step step(int prev_token, const Tensor& hidden, const Tensor& prototype_states) const;

  /// Decodes until eos or max_len content tokens. Greedy ties break to the
  /// lowest token id; pad and bos are never emitted (masked out).
  DecodeResult decode(const Tensor& refined, const Tensor& prototype_states, DecodeMode mode,
                      std::size_t max_len, std::mt19937_64* rng) const;

 private:
  ModelDims dims_;
  Tensor embed_;
  Tensor bridge_w_, bridge_b_;
  Tensor w_ih_, w_hh_, b_ih_, b_hh_;
  Tensor attn_w_;
  Tensor combine_w_, combine_b_;
  Tensor out_w_, out_b_;
};

/// Teacher-forced cross-entropy of `target` decoded from `source`, with the
/// source sentence serving as its own prototype. No reference set exists at
/// pretraining time, so the refinement direction is zero and the refined
/// vector equals the source encoding. Targets longer than max_len are
/// truncated (with a warning on stderr).
Tensor refiner_nll(const EncoderNet& encoder, const DecoderNet& decoder,
                   const std::vector<int>& source, const std::vector<int>& target,
                   std::size_t max_len);

}  // namespace compexp
