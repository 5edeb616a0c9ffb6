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

#include "compexp/model.hpp"

#include <algorithm>

#include "compexp/rng.hpp"

namespace compexp {

Model::Model(const ModelConfig& c, ParamStore s)
    : cfg(c), store(std::move(s)), encoder(store, c.dims), decoder(store, c.dims) {}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed,
                  const std::map<int, std::vector<double>>& pretrained) {
  ParamStore store;
  auto rng = make_rng(derive_seed(seed, "model-init"));
  EncoderNet::register_params(store, cfg.dims, rng, pretrained);
  DecoderNet::register_params(store, cfg.dims, rng);
  return Model(cfg, std::move(store));
}

Model Model::adopt(const ModelConfig& cfg, ParamStore store) {
  return Model(cfg, std::move(store));
}

std::vector<std::size_t> candidate_pool(const CorpusData& corpus, const std::string& item_id,
                                        const std::string& exclude_user,
                                        std::size_t max_profile, std::mt19937_64& rng) {
  if (!corpus.has_item(item_id)) return {};
  std::vector<std::size_t> pool;
  for (std::size_t id : corpus.item_profile(item_id).sentence_ids)
    if (corpus.sentences[id].user_id != exclude_user) pool.push_back(id);
  return sample_entries(pool, max_profile, rng);
}

std::vector<std::size_t> training_pool(const CorpusData& corpus, const std::string& item_id,
                                       std::size_t target_id, std::size_t max_profile,
                                       std::mt19937_64& rng) {
  const auto& all = corpus.item_profile(item_id).sentence_ids;
  if (all.size() <= max_profile) return all;
  std::vector<std::size_t> others;
  others.reserve(all.size());
  for (std::size_t id : all)
    if (id != target_id) others.push_back(id);
  std::vector<std::size_t> pool = sample_entries(others, max_profile - 1, rng);
  pool.push_back(target_id);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<std::size_t> reference_ids(const CorpusData& corpus, const std::string& user_id,
                                       std::optional<std::size_t> exclude_review,
                                       std::size_t max_profile, std::mt19937_64& rng) {
  std::vector<std::size_t> ids;
  if (corpus.has_user(user_id)) {
    for (std::size_t id : corpus.user_profile(user_id).sentence_ids)
      if (!exclude_review || corpus.sentences[id].review_index != *exclude_review)
        ids.push_back(id);
  } else {
    // Cold start: a generic profile sampled from the global training pool.
    ids = corpus.train_ids;
  }
  return sample_entries(ids, max_profile, rng);
}

std::vector<Tensor> build_references(const Model& model, const CorpusData& corpus,
                                     const std::vector<std::size_t>& ref_ids,
                                     int target_rating) {
  std::vector<Tensor> refs;
  refs.reserve(ref_ids.size());
  for (std::size_t id : ref_ids) {
    const LabeledSentence& s = corpus.sentences[id];
    const SentenceEncoding enc = model.encoder.encode_sentence(s.tokens);
    const Tensor diff = model.encoder.encode_rating_diff(target_rating - s.rating);
    refs.push_back(model.encoder.transform_reference(enc.pooled, diff));
  }
  return refs;
}

GenerationResult generate_one(const Model& model, const CorpusData& corpus,
                              const std::string& user_id, const std::string& item_id,
                              int rating, std::mt19937_64& rng) {
  NoGradGuard no_grad;
  GenerationResult out;

  const std::vector<std::size_t> cand_ids =
      candidate_pool(corpus, item_id, user_id, model.cfg.max_profile, rng);
  if (cand_ids.empty()) {
    out.error = "empty candidate pool for item \"" + item_id + "\"";
    return out;
  }
  const std::vector<std::size_t> ref_ids =
      reference_ids(corpus, user_id, std::nullopt, model.cfg.max_profile, rng);
  if (ref_ids.empty()) {
    out.error = "empty reference profile for user \"" + user_id + "\"";
    return out;
  }

  ExtractionContext ctx;
  ctx.kappa = model.cfg.kappa;
  std::vector<SentenceEncoding> cand_encs;
  cand_encs.reserve(cand_ids.size());
  for (std::size_t id : cand_ids) {
    cand_encs.push_back(model.encoder.encode_sentence(corpus.sentences[id].tokens));
    ctx.candidates.push_back(cand_encs.back().pooled);
  }
  ctx.references = build_references(model, corpus, ref_ids, rating);

  const Tensor dist = extraction_distribution(ctx);
  const PrototypeChoice choice = sample_prototype(dist.values(), SampleMode::kArgmax, rng);

  std::vector<std::vector<double>> ref_values;
  ref_values.reserve(ctx.references.size());
  for (const Tensor& h : ctx.references) ref_values.push_back(h.values());

  std::vector<double> x = ctx.candidates[choice.index].values();
  for (std::size_t step = 0; step < model.cfg.refine_steps; ++step)
    x = apply_refinement(x, refine_direction(x, ref_values, model.cfg.kappa));

  const Tensor refined = Tensor::from_vector(x, {model.cfg.dims.text_dim});
  const DecodeResult decoded =
      model.decoder.decode(refined, cand_encs[choice.index].token_states, DecodeMode::kGreedy,
                           model.cfg.max_decode_len, nullptr);

  out.ok = true;
  out.prototype_id = cand_ids[choice.index];
  out.prototype = corpus.sentences[out.prototype_id].tokens;
  out.explanation = decoded.tokens;
  out.ext_log_prob = choice.log_prob;
  out.dec_log_prob = decoded.log_prob;
  return out;
}

}  // namespace compexp
