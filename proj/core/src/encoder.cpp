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

#include "compexp/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "compexp/rng.hpp"

namespace compexp {

std::vector<double> glorot_init(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(count);
  for (auto& x : v) x = uniform_real(rng, -limit, limit);
  return v;
}

namespace {

std::vector<double> uniform_init(std::size_t count, double limit, std::mt19937_64& rng) {
  std::vector<double> v(count);
  for (auto& x : v) x = uniform_real(rng, -limit, limit);
  return v;
}

void register_gru(ParamStore& store, const std::string& prefix, std::size_t input,
                  std::size_t hidden, std::mt19937_64& rng) {
  store.create(prefix + ".w_ih", {3 * hidden, input}, glorot_init(input, hidden, 3 * hidden * input, rng));
  store.create(prefix + ".w_hh", {3 * hidden, hidden},
               glorot_init(hidden, hidden, 3 * hidden * hidden, rng));
  store.create_zeros(prefix + ".b_ih", {3 * hidden});
  store.create_zeros(prefix + ".b_hh", {3 * hidden});
}

}  // namespace

Tensor gru_step(const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh,
                const Tensor& x, const Tensor& h, std::size_t hidden) {
  const Tensor gi = add(matmul(w_ih, x), b_ih);
  const Tensor gh = add(matmul(w_hh, h), b_hh);
  const Tensor r = sigmoid(add(slice(gi, 0, 0, hidden), slice(gh, 0, 0, hidden)));
  const Tensor z = sigmoid(add(slice(gi, 0, hidden, hidden), slice(gh, 0, hidden, hidden)));
  const Tensor n =
      tanh_op(add(slice(gi, 0, 2 * hidden, hidden), mul(r, slice(gh, 0, 2 * hidden, hidden))));
  return add(n, mul(z, sub(h, n)));
}

void EncoderNet::register_params(ParamStore& store, const ModelDims& dims, std::mt19937_64& rng,
                                 const std::map<int, std::vector<double>>& pretrained) {
  const std::size_t v = dims.vocab, e = dims.embed, h = dims.hidden, t = dims.text_dim;
  const std::size_t dr = dims.rating_embed;
  const std::size_t rating_rows = 2 * static_cast<std::size_t>(dims.r_max) + 1;

  std::vector<double> embed = uniform_init(v * e, 0.1, rng);
  for (const auto& [id, vec] : pretrained) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) continue;
    if (vec.size() != e)
      throw std::invalid_argument("pretrained embedding width " + std::to_string(vec.size()) +
                                  " does not match embed dim " + std::to_string(e));
    std::copy(vec.begin(), vec.end(), embed.begin() + static_cast<std::size_t>(id) * e);
  }
  store.create("enc.embed", {v, e}, std::move(embed));

  register_gru(store, "enc.fwd", e, h, rng);
  register_gru(store, "enc.bwd", e, h, rng);

  store.create("enc.proj.w", {t, 2 * h}, glorot_init(2 * h, t, t * 2 * h, rng));
  store.create_zeros("enc.proj.b", {t});

  store.create("enc.attn.w", {t, t}, glorot_init(t, t, t * t, rng));
  store.create_zeros("enc.attn.b", {t});
  store.create("enc.attn.v", {t}, glorot_init(t, 1, t, rng));

  store.create("enc.rating.embed", {rating_rows, dr}, uniform_init(rating_rows * dr, 0.1, rng));

  store.create("enc.transform.w1", {t, t + dr}, glorot_init(t + dr, t, t * (t + dr), rng));
  store.create_zeros("enc.transform.b1", {t});
  store.create("enc.transform.w2", {t, t}, glorot_init(t, t, t * t, rng));
  store.create_zeros("enc.transform.b2", {t});
}

EncoderNet::EncoderNet(const ParamStore& store, const ModelDims& dims)
    : dims_(dims),
      embed_(store.get("enc.embed")),
      fwd_w_ih_(store.get("enc.fwd.w_ih")),
      fwd_w_hh_(store.get("enc.fwd.w_hh")),
      fwd_b_ih_(store.get("enc.fwd.b_ih")),
      fwd_b_hh_(store.get("enc.fwd.b_hh")),
      bwd_w_ih_(store.get("enc.bwd.w_ih")),
      bwd_w_hh_(store.get("enc.bwd.w_hh")),
      bwd_b_ih_(store.get("enc.bwd.b_ih")),
      bwd_b_hh_(store.get("enc.bwd.b_hh")),
      proj_w_(store.get("enc.proj.w")),
      proj_b_(store.get("enc.proj.b")),
      attn_w_(store.get("enc.attn.w")),
      attn_b_(store.get("enc.attn.b")),
      attn_v_(store.get("enc.attn.v")),
      rating_embed_(store.get("enc.rating.embed")),
      tr_w1_(store.get("enc.transform.w1")),
      tr_b1_(store.get("enc.transform.b1")),
      tr_w2_(store.get("enc.transform.w2")),
      tr_b2_(store.get("enc.transform.b2")) {}

SentenceEncoding EncoderNet::encode_sentence(std::span<const int> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("encode_sentence: empty token sequence");
  const std::size_t len = tokens.size();
  const std::size_t h = dims_.hidden;

  const Tensor embedded = rows(embed_, tokens);  // (L, E)

  std::vector<Tensor> fwd_states(len), bwd_states(len);
  Tensor hf = Tensor::zeros({h});
  for (std::size_t i = 0; i < len; ++i) {
    hf = gru_step(fwd_w_ih_, fwd_w_hh_, fwd_b_ih_, fwd_b_hh_, row(embedded, i), hf, h);
    fwd_states[i] = hf;
  }
  Tensor hb = Tensor::zeros({h});
  for (std::size_t i = len; i > 0; --i) {
    hb = gru_step(bwd_w_ih_, bwd_w_hh_, bwd_b_ih_, bwd_b_hh_, row(embedded, i - 1), hb, h);
    bwd_states[i - 1] = hb;
  }

  // Project each [fwd; bwd] token state into the shared text space, then pool
  // with additive attention so the pooled vector is a convex combination of
  // the projected token states.
  std::vector<Tensor> projected(len), scores(len);
  for (std::size_t i = 0; i < len; ++i) {
    const Tensor u = add(matmul(proj_w_, concat(fwd_states[i], bwd_states[i])), proj_b_);
    projected[i] = u;
    scores[i] = dot(attn_v_, tanh_op(add(matmul(attn_w_, u), attn_b_)));
  }
  SentenceEncoding enc;
  enc.token_states = stack(projected);                               // (L, T)
  enc.attn_weights = softmax(concat(std::span<const Tensor>(scores)), 0);  // (L)
  enc.pooled = matmul(enc.attn_weights, enc.token_states);           // (T)
  return enc;
}

Tensor EncoderNet::encode_rating_diff(int delta) const {
  if (delta < -dims_.r_max || delta > dims_.r_max)
    throw std::out_of_range("encode_rating_diff: delta " + std::to_string(delta) +
                            " outside [-" + std::to_string(dims_.r_max) + ", " +
                            std::to_string(dims_.r_max) + "]");
  return row(rating_embed_, static_cast<std::size_t>(delta + dims_.r_max));
}

Tensor EncoderNet::transform_reference(const Tensor& ref_pooled, const Tensor& diff_embed) const {
  const Tensor joined = concat(ref_pooled, diff_embed);
  const Tensor hidden = tanh_op(add(matmul(tr_w1_, joined), tr_b1_));
  return add(matmul(tr_w2_, hidden), tr_b2_);
}

}  // namespace compexp
