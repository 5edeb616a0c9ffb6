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

#include <map>
#include <random>
#include <span>
#include <string>

#include "compexp/params.hpp"
#include "compexp/tensor.hpp"

namespace compexp {

/// Model dimensions shared by encoder and decoder.
struct ModelDims {
  std::size_t vocab = 0;        // V
  std::size_t embed = 64;       // E, word embedding width
  std::size_t hidden = 64;      // H, GRU hidden width per direction
  std::size_t rating_embed = 16;  // D_r
  std::size_t text_dim = 64;    // T, shared latent text space
  int r_max = 4;                // rating range width; deltas live in [-r_max, r_max]
};

/// Encoding of one sentence in the shared text space.
struct SentenceEncoding {
  Tensor pooled;        // (T), attention-weighted sum of token_states rows
  Tensor token_states;  // (L, T), kept for decoder attention
  Tensor attn_weights;  // (L), nonnegative, sums to 1
};

/// Universal text encoder: embeddings -> bidirectional GRU -> per-token
/// projection to T -> additive self-attention pooling. Also owns the
/// rating-difference embedding and the 2-layer tanh MLP that fuses a
/// reference encoding with its rating-difference embedding.
class EncoderNet {
 public:
  /// Creates and initializes all encoder parameters in the store.
  /// Word vectors present in `pretrained` override random initialization.
  static void register_params(ParamStore& store, const ModelDims& dims, std::mt19937_64& rng,
                              const std::map<int, std::vector<double>>& pretrained = {});

  EncoderNet(const ParamStore& store, const ModelDims& dims);

  const ModelDims& dims() const { return dims_; }

  SentenceEncoding encode_sentence(std::span<const int> tokens) const;

  /// Row (delta + r_max) of the rating-difference table; delta outside
  /// [-r_max, r_max] is an error.
  Tensor encode_rating_diff(int delta) const;

  /// h = W2 tanh(W1 [ref; diff] + b1) + b2.
  Tensor transform_reference(const Tensor& ref_pooled, const Tensor& diff_embed) const;

  Tensor word_embeddings() const { return embed_; }

 private:
  ModelDims dims_;
  Tensor embed_;
  Tensor fwd_w_ih_, fwd_w_hh_, fwd_b_ih_, fwd_b_hh_;
  Tensor bwd_w_ih_, bwd_w_hh_, bwd_b_ih_, bwd_b_hh_;
  Tensor proj_w_, proj_b_;
  Tensor attn_w_, attn_b_, attn_v_;
  Tensor rating_embed_;
  Tensor tr_w1_, tr_b1_, tr_w2_, tr_b2_;
};

/// One GRU step: gates stacked (reset, update, candidate) in the weight rows.
/// h' = n + z * (h - n) with r, z sigmoid and n tanh.
Tensor gru_step(const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh,
                const Tensor& x, const Tensor& h, std::size_t hidden);

/// Uniform init in [-limit, limit] with the Glorot bound sqrt(6/(fan_in+fan_out)).
std::vector<double> glorot_init(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                std::mt19937_64& rng);

}  // namespace compexp
