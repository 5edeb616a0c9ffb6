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

#include "compexp/refiner.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "compexp/corpus.hpp"
#include "compexp/rng.hpp"

namespace compexp {

namespace {

double norm_of(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

constexpr double kZeroDirectionEps = 1e-8;
constexpr double kMaskPenalty = -1e30;  // underflows to probability 0 exactly

}  // namespace

std::vector<double> refine_direction(const std::vector<double>& x,
                                     const std::vector<std::vector<double>>& references,
                                     double kappa) {
  const double nx = norm_of(x);
  if (nx == 0.0) throw std::domain_error("refine_direction: zero-norm input vector");
  std::vector<double> z(x.size(), 0.0);
  if (references.empty()) return z;
  // Shift the exponents by the largest kappa*cos so weights stay finite for
  // large kappa; a common positive factor does not change the direction.
  std::vector<double> coses(references.size());
  std::vector<double> norms(references.size());
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto& h = references[i];
    if (h.size() != x.size())
      throw std::invalid_argument("refine_direction: reference dim mismatch");
    const double nh = norm_of(h);
    if (nh == 0.0) throw std::domain_error("refine_direction: zero-norm reference vector");
    double dot = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) dot += x[k] * h[k];
    coses[i] = dot / (nx * nh);
    norms[i] = nh;
    max_score = std::max(max_score, kappa * coses[i]);
  }
  for (std::size_t i = 0; i < references.size(); ++i) {
    const double w = std::exp(kappa * coses[i] - max_score);
    const auto& h = references[i];
    for (std::size_t k = 0; k < x.size(); ++k)
      z[k] += w * (h[k] / (nx * norms[i]) - coses[i] * x[k] / (nx * nx));
  }
  return z;
}

std::vector<double> apply_refinement(const std::vector<double>& x,
                                     const std::vector<double>& z) {
  if (z.size() != x.size()) throw std::invalid_argument("apply_refinement: dim mismatch");
  const double nz = norm_of(z);
  if (nz <= kZeroDirectionEps) return x;
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + z[k] / nz;
  return out;
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

void DecoderNet::register_params(ParamStore& store, const ModelDims& dims,
                                 std::mt19937_64& rng) {
  const std::size_t v = dims.vocab, e = dims.embed, h = dims.hidden, t = dims.text_dim;
  {
    std::vector<double> embed(v * e);
    for (auto& x : embed) x = uniform_real(rng, -0.1, 0.1);
    store.create("dec.embed", {v, e}, std::move(embed));
  }
  store.create("dec.bridge.w", {h, t}, glorot_init(t, h, h * t, rng));
  store.create_zeros("dec.bridge.b", {h});
  store.create("dec.gru.w_ih", {3 * h, e}, glorot_init(e, h, 3 * h * e, rng));
  store.create("dec.gru.w_hh", {3 * h, h}, glorot_init(h, h, 3 * h * h, rng));
  store.create_zeros("dec.gru.b_ih", {3 * h});
  store.create_zeros("dec.gru.b_hh", {3 * h});
  store.create("dec.attn.w", {h, t}, glorot_init(t, h, h * t, rng));
  store.create("dec.combine.w", {h, h + t}, glorot_init(h + t, h, h * (h + t), rng));
  store.create_zeros("dec.combine.b", {h});
  store.create("dec.out.w", {v, h}, glorot_init(h, v, v * h, rng));
  store.create_zeros("dec.out.b", {v});
}

DecoderNet::DecoderNet(const ParamStore& store, const ModelDims& dims)
    : dims_(dims),
      embed_(store.get("dec.embed")),
      bridge_w_(store.get("dec.bridge.w")),
      bridge_b_(store.get("dec.bridge.b")),
      w_ih_(store.get("dec.gru.w_ih")),
      w_hh_(store.get("dec.gru.w_hh")),
      b_ih_(store.get("dec.gru.b_ih")),
      b_hh_(store.get("dec.gru.b_hh")),
      attn_w_(store.get("dec.attn.w")),
      combine_w_(store.get("dec.combine.w")),
      combine_b_(store.get("dec.combine.b")),
      out_w_(store.get("dec.out.w")),
      out_b_(store.get("dec.out.b")) {}

Tensor DecoderNet::initial_hidden(const Tensor& refined) const {
  return tanh_op(add(matmul(bridge_w_, refined), bridge_b_));
}

DecoderNet::Step DecoderNet::step(int prev_token, const Tensor& hidden,
                                  const Tensor& prototype_states) const {
  const Tensor x = row(embed_, static_cast<std::size_t>(prev_token));
  const Tensor h = gru_step(w_ih_, w_hh_, b_ih_, b_hh_, x, hidden, dims_.hidden);
  // Multiplicative attention: score_t = h . (W_a u_t) over prototype states.
  const std::size_t len = prototype_states.shape()[0];
  std::vector<Tensor> scores(len);
  for (std::size_t i = 0; i < len; ++i)
    scores[i] = dot(h, matmul(attn_w_, row(prototype_states, i)));
  const Tensor attn = softmax(concat(std::span<const Tensor>(scores)), 0);
  const Tensor context = matmul(attn, prototype_states);  // (T)
  const Tensor combined = tanh_op(add(matmul(combine_w_, concat(h, context)), combine_b_));
  const Tensor logits = add(matmul(out_w_, combined), out_b_);
  return {logits, h, attn};
}

DecodeResult DecoderNet::decode(const Tensor& refined, const Tensor& prototype_states,
                                DecodeMode mode, std::size_t max_len,
                                std::mt19937_64* rng) const {
  if (max_len < 1) throw std::invalid_argument("decode: max_len must be at least 1");
  if (mode == DecodeMode::kSample && rng == nullptr)
    throw std::invalid_argument("decode: sampling requires an rng");

  std::vector<double> mask(dims_.vocab, 0.0);
  mask[Vocab::kPad] = kMaskPenalty;
  mask[Vocab::kBos] = kMaskPenalty;
  const Tensor mask_t = Tensor::from_vector(std::move(mask), {dims_.vocab});

  DecodeResult result;
  Tensor hidden = initial_hidden(refined);
  Tensor total;
  int prev = Vocab::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    const Step s = step(prev, hidden, prototype_states);
    hidden = s.hidden;
    const Tensor log_probs = log_softmax(add(s.logits, mask_t), 0);
    const std::vector<double>& lp = log_probs.values();

    int chosen;
    if (mode == DecodeMode::kGreedy) {
      chosen = Vocab::kUnk;  // lowest emittable id
      for (std::size_t i = 0; i < lp.size(); ++i)
        if (lp[i] > lp[static_cast<std::size_t>(chosen)]) chosen = static_cast<int>(i);
    } else {
      std::vector<double> probs(lp.size());
      for (std::size_t i = 0; i < lp.size(); ++i) probs[i] = std::exp(lp[i]);
      chosen = static_cast<int>(sample_index(probs, *rng));
    }

    const Tensor chosen_lp = pick(log_probs, static_cast<std::size_t>(chosen));
    total = total.defined() ? add(total, chosen_lp) : chosen_lp;
    result.log_prob += lp[static_cast<std::size_t>(chosen)];
    if (chosen == Vocab::kEos) break;
    result.tokens.push_back(chosen);
    prev = chosen;
  }
  result.log_prob_graph = total;
  return result;
}

Tensor refiner_nll(const EncoderNet& encoder, const DecoderNet& decoder,
                   const std::vector<int>& source, const std::vector<int>& target,
                   std::size_t max_len) {
  if (source.empty() || target.empty())
    throw std::invalid_argument("refiner_nll: empty sentence");
  std::vector<int> tgt = target;
  if (tgt.size() > max_len) {
    std::cerr << "warning: refiner_nll target truncated from " << tgt.size() << " to "
              << max_len << " tokens\n";
    tgt.resize(max_len);
  }
  const SentenceEncoding enc = encoder.encode_sentence(source);
  // No reference set at pretraining time: the refinement direction is zero
  // and the refined vector is the source encoding itself.
  Tensor hidden = decoder.initial_hidden(enc.pooled);
  Tensor loss;
  int prev = Vocab::kBos;
  for (std::size_t t = 0; t <= tgt.size(); ++t) {
    const DecoderNet::Step s = decoder.step(prev, hidden, enc.token_states);
    hidden = s.hidden;
    const int want = t < tgt.size() ? tgt[t] : Vocab::kEos;
    const Tensor lp = pick(log_softmax(s.logits, 0), static_cast<std::size_t>(want));
    loss = loss.defined() ? sub(loss, lp) : scale(lp, -1.0);
    prev = want;
  }
  return loss;
}

}  // namespace compexp
