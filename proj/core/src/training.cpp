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

#include "compexp/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "compexp/rng.hpp"

namespace compexp {

void TrainConfig::validate() const {
  if (mc_samples < 2)
    throw std::invalid_argument("TrainConfig: mc_samples must be at least 2 (baseline)");
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
    throw std::invalid_argument("TrainConfig: lambdas must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (clip_norm <= 0) throw std::invalid_argument("TrainConfig: clip_norm must be positive");
}

namespace {

/// Caches pooled encodings for repeated no-grad evaluation passes.
class PooledCache {
 public:
  PooledCache(const Model& model, const CorpusData& corpus) : model_(model), corpus_(corpus) {}

  const Tensor& pooled(std::size_t sentence_id) {
    auto it = cache_.find(sentence_id);
    if (it != cache_.end()) return it->second;
    const Tensor p = model_.encoder.encode_sentence(corpus_.sentences[sentence_id].tokens).pooled;
    return cache_.emplace(sentence_id, p).first->second;
  }

 private:
  const Model& model_;
  const CorpusData& corpus_;
  std::map<std::size_t, Tensor> cache_;
};

struct ExtractorInstance {
  std::size_t target_id = 0;
};

/// Shared assembly of an extraction context for one target sentence.
/// Returns false when the reference set is empty after exclusions.
bool build_extractor_context(const Model& model, const CorpusData& corpus,
                             std::size_t target_id, const std::vector<std::size_t>& pool,
                             std::mt19937_64& rng, ExtractionContext& ctx,
                             std::size_t& target_index, PooledCache* cache) {
  const LabeledSentence& target = corpus.sentences[target_id];
  const std::vector<std::size_t> refs = reference_ids(
      corpus, target.user_id, target.review_index, model.cfg.max_profile, rng);
  if (refs.empty()) return false;

  ctx.kappa = model.cfg.kappa;
  ctx.candidates.clear();
  ctx.references.clear();
  target_index = pool.size();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i] == target_id) target_index = i;
    ctx.candidates.push_back(cache != nullptr
                                 ? cache->pooled(pool[i])
                                 : model.encoder
                                       .encode_sentence(corpus.sentences[pool[i]].tokens)
                                       .pooled);
  }
  if (target_index == pool.size())
    throw std::logic_error("extractor instance: target missing from pool");
  for (std::size_t id : refs) {
    const Tensor ref_pooled =
        cache != nullptr
            ? cache->pooled(id)
            : model.encoder.encode_sentence(corpus.sentences[id].tokens).pooled;
    const Tensor diff =
        model.encoder.encode_rating_diff(target.rating - corpus.sentences[id].rating);
    ctx.references.push_back(model.encoder.transform_reference(ref_pooled, diff));
  }
  return true;
}

/// Mean validation NLL plus the uniform baseline mean(log pool size).
std::pair<double, double> extractor_validation(const Model& model, const CorpusData& corpus,
                                               const TrainConfig& cfg) {
  NoGradGuard no_grad;
  PooledCache cache(model, corpus);
  auto rng = make_rng(derive_seed(cfg.seed, "extractor-val"));
  double total = 0.0, baseline = 0.0;
  std::size_t n = 0;
  for (std::size_t id : corpus.valid_ids) {
    const LabeledSentence& s = corpus.sentences[id];
    if (!corpus.has_item(s.item_id) || !corpus.has_user(s.user_id)) continue;
    // Pool: the item's training sentences capped to leave room, plus the
    // held-out target itself.
    std::vector<std::size_t> pool = sample_entries(
        corpus.item_profile(s.item_id).sentence_ids, model.cfg.max_profile - 1, rng);
    pool.push_back(id);
    std::sort(pool.begin(), pool.end());
    ExtractionContext ctx;
    std::size_t target_index = 0;
    if (!build_extractor_context(model, corpus, id, pool, rng, ctx, target_index, &cache))
      continue;
    total += extractor_nll(ctx, target_index).item();
    baseline += std::log(static_cast<double>(pool.size()));
    ++n;
  }
  if (n == 0) throw CorpusError("extractor validation: no usable instances");
  return {total / static_cast<double>(n), baseline / static_cast<double>(n)};
}

void step_if_batch_full(Model& model, const TrainConfig& cfg, double lr, std::size_t& in_batch,
                        bool force = false) {
  if (in_batch == 0) return;
  if (!force && in_batch < cfg.batch_size) return;
  model.store.clip_grads(cfg.clip_norm);
  AdamConfig adam;
  adam.lr = lr;
  model.store.adam_step(adam);
  model.store.zero_grads();
  in_batch = 0;
}

}  // namespace

TrainLog pretrain_extractor(Model& model, const CorpusData& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.train_ids.empty()) throw CorpusError("pretrain_extractor: empty training split");

  TrainLog log;
  log.best_val = std::numeric_limits<double>::infinity();
  auto best = model.store.snapshot_values();
  model.store.zero_grads();
  model.store.reset_optimizer();

  for (std::size_t epoch = 0; epoch < cfg.epochs_extractor; ++epoch) {
    auto rng = make_rng(derive_seed(cfg.seed, "extractor-epoch", epoch));
    std::vector<std::size_t> order = corpus.train_ids;
    shuffle_vec(order, rng);

    double train_loss = 0.0;
    std::size_t n_instances = 0, in_batch = 0;
    for (std::size_t target_id : order) {
      const LabeledSentence& s = corpus.sentences[target_id];
      const std::vector<std::size_t> pool =
          training_pool(corpus, s.item_id, target_id, model.cfg.max_profile, rng);
      ExtractionContext ctx;
      std::size_t target_index = 0;
      if (!build_extractor_context(model, corpus, target_id, pool, rng, ctx, target_index,
                                   nullptr))
        continue;
      const Tensor loss = extractor_nll(ctx, target_index);
      train_loss += loss.item();
      ++n_instances;
      backward(scale(loss, 1.0 / static_cast<double>(cfg.batch_size)));
      ++in_batch;
      step_if_batch_full(model, cfg, cfg.lr_pretrain, in_batch);
    }
    step_if_batch_full(model, cfg, cfg.lr_pretrain, in_batch, /*force=*/true);
    if (n_instances == 0) throw CorpusError("pretrain_extractor: no usable instances");

    const auto [val_nll, baseline] = extractor_validation(model, corpus, cfg);
    log.val_uniform_baseline = baseline;
    log.epochs.push_back(
        {epoch, train_loss / static_cast<double>(n_instances), val_nll});
    if (val_nll < log.best_val) {
      log.best_val = val_nll;
      log.best_epoch = epoch;
      best = model.store.snapshot_values();
    } else if (epoch - log.best_epoch >= cfg.patience) {
      break;
    }
  }
  model.store.restore_values(best);
  return log;
}

std::vector<std::pair<std::size_t, std::size_t>> make_refiner_pairs(const CorpusData& corpus,
                                                                    const EncoderNet& encoder) {
  NoGradGuard no_grad;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& [item_id, profile] : corpus.item_profiles) {
    const auto& ids = profile.sentence_ids;
    if (ids.size() < 2) continue;
    std::vector<std::vector<double>> pooled;
    pooled.reserve(ids.size());
    for (std::size_t id : ids)
      pooled.push_back(encoder.encode_sentence(corpus.sentences[id].tokens).pooled.values());
    for (std::size_t t = 0; t < ids.size(); ++t) {
      std::size_t best = ids.size();
      double best_cos = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < ids.size(); ++s) {
        if (s == t) continue;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t k = 0; k < pooled[t].size(); ++k) {
          dot += pooled[s][k] * pooled[t][k];
          na += pooled[s][k] * pooled[s][k];
          nb += pooled[t][k] * pooled[t][k];
        }
        const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
        if (cos > best_cos) {
          best_cos = cos;
          best = s;
        }
      }
      pairs.emplace_back(ids[best], ids[t]);
    }
  }
  return pairs;
}

TrainLog pretrain_refiner(Model& model, const CorpusData& corpus,
                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw std::invalid_argument("pretrain_refiner: no training pairs");

  std::vector<std::pair<std::size_t, std::size_t>> shuffled = pairs;
  {
    auto rng = make_rng(derive_seed(cfg.seed, "refiner-val-split"));
    shuffle_vec(shuffled, rng);
  }
  const std::size_t n_val = std::max<std::size_t>(1, shuffled.size() / 10);
  const std::vector<std::pair<std::size_t, std::size_t>> val(shuffled.begin(),
                                                             shuffled.begin() + n_val);
  std::vector<std::pair<std::size_t, std::size_t>> train(shuffled.begin() + n_val,
                                                         shuffled.end());
  if (train.empty()) train = val;  // degenerate tiny datasets: overfit on purpose

  auto val_perplexity = [&]() {
    NoGradGuard no_grad;
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& [src, tgt] : val) {
      nll += refiner_nll(model.encoder, model.decoder, corpus.sentences[src].tokens,
                         corpus.sentences[tgt].tokens, model.cfg.max_decode_len)
                 .item();
      tokens += std::min(corpus.sentences[tgt].tokens.size(), model.cfg.max_decode_len) + 1;
    }
    return std::exp(nll / static_cast<double>(tokens));
  };

  TrainLog log;
  log.best_val = std::numeric_limits<double>::infinity();
  auto best = model.store.snapshot_values();
  model.store.zero_grads();
  model.store.reset_optimizer();

  for (std::size_t epoch = 0; epoch < cfg.epochs_refiner; ++epoch) {
    auto rng = make_rng(derive_seed(cfg.seed, "refiner-epoch", epoch));
    shuffle_vec(train, rng);
    double train_loss = 0.0;
    std::size_t in_batch = 0;
    for (const auto& [src, tgt] : train) {
      const Tensor loss = refiner_nll(model.encoder, model.decoder, corpus.sentences[src].tokens,
                                      corpus.sentences[tgt].tokens, model.cfg.max_decode_len);
      train_loss += loss.item();
      backward(scale(loss, 1.0 / static_cast<double>(cfg.batch_size)));
      ++in_batch;
      step_if_batch_full(model, cfg, cfg.lr_pretrain, in_batch);
    }
    step_if_batch_full(model, cfg, cfg.lr_pretrain, in_batch, /*force=*/true);

    const double ppl = val_perplexity();
    log.epochs.push_back({epoch, train_loss / static_cast<double>(train.size()), ppl});
    if (ppl < log.best_val) {
      log.best_val = ppl;
      log.best_epoch = epoch;
      best = model.store.snapshot_values();
    } else if (epoch - log.best_epoch >= cfg.patience) {
      break;
    }
  }
  model.store.restore_values(best);
  return log;
}

RewardBundle compute_rewards(const std::vector<int>& explanation,
                             const std::vector<int>& prototype,
                             const std::vector<std::vector<int>>& references,
                             const IdfTable& idf, const BleuWeights& weights) {
  RewardBundle r;
  r.pi = explanation.empty() ? 0.0 : idf_bleu(explanation, references, idf, weights);
  r.pi_ext = idf_bleu(prototype, references, idf, weights);
  r.pi_ref = clipped_recall(explanation, prototype, references, idf, weights);
  return r;
}

Tensor policy_loss(const std::vector<SampleOutcome>& samples, const TrainConfig& cfg) {
  if (samples.size() < 2)
    throw std::invalid_argument("policy_loss: need at least 2 samples for the baseline");
  const double n = static_cast<double>(samples.size());
  double mean_pi = 0.0, mean_ref = 0.0, mean_ext = 0.0;
  for (const auto& s : samples) {
    mean_pi += s.rewards.pi;
    mean_ref += s.rewards.pi_ref;
    mean_ext += s.rewards.pi_ext;
  }
  mean_pi /= n;
  mean_ref /= n;
  mean_ext /= n;

  Tensor loss;
  for (const auto& s : samples) {
    const double w_ref = cfg.lambda1 * (s.rewards.pi - mean_pi) +
                         cfg.lambda2 * (s.rewards.pi_ref - mean_ref);
    const double w_ext = cfg.lambda3 * (s.rewards.pi - mean_pi) +
                         cfg.lambda4 * (s.rewards.pi_ext - mean_ext);
    const Tensor term = add(scale(s.log_p_ref, -w_ref), scale(s.log_p_ext, -w_ext));
    loss = loss.defined() ? add(loss, term) : term;
  }
  return scale(loss, 1.0 / n);
}

std::vector<EvalInstance> group_instances(const CorpusData& corpus,
                                          const std::vector<std::size_t>& split_ids) {
  std::map<std::size_t, EvalInstance> by_review;
  for (std::size_t id : split_ids) {
    const LabeledSentence& s = corpus.sentences[id];
    auto& inst = by_review[s.review_index];
    if (inst.gt_ids.empty()) {
      inst.user_id = s.user_id;
      inst.item_id = s.item_id;
      inst.rating = s.rating;
      inst.review_index = s.review_index;
    }
    inst.gt_ids.push_back(id);
  }
  std::vector<EvalInstance> out;
  out.reserve(by_review.size());
  for (auto& [idx, inst] : by_review) out.push_back(std::move(inst));
  return out;
}

double mean_idf_bleu_1(const Model& model, const CorpusData& corpus,
                       const std::vector<EvalInstance>& instances, std::uint64_t seed) {
  auto rng = make_rng(derive_seed(seed, "eval-idf-bleu1"));
  const BleuWeights w1 = BleuWeights::uniform(1);
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& inst : instances) {
    const GenerationResult gen =
        generate_one(model, corpus, inst.user_id, inst.item_id, inst.rating, rng);
    if (!gen.ok) continue;
    std::vector<std::vector<int>> refs;
    refs.reserve(inst.gt_ids.size());
    for (std::size_t id : inst.gt_ids) refs.push_back(corpus.sentences[id].tokens);
    total += gen.explanation.empty() ? 0.0 : idf_bleu(gen.explanation, refs, corpus.idf, w1);
    ++n;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

TrainLog finetune(Model& model, const CorpusData& corpus, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<EvalInstance> instances = group_instances(corpus, corpus.train_ids);
  if (instances.empty()) throw CorpusError("finetune: empty training split");
  const std::vector<EvalInstance> val_instances = group_instances(corpus, corpus.valid_ids);

  TrainLog log;
  log.best_val = -std::numeric_limits<double>::infinity();
  auto best = model.store.snapshot_values();
  model.store.zero_grads();
  model.store.reset_optimizer();

  for (std::size_t epoch = 0; epoch < cfg.epochs_finetune; ++epoch) {
    auto rng = make_rng(derive_seed(cfg.seed, "finetune-epoch", epoch));
    shuffle_vec(instances, rng);

    double train_reward = 0.0;
    std::size_t n_instances = 0, in_batch = 0, degenerate = 0;
    for (const auto& inst : instances) {
      const std::vector<std::size_t> cand_ids =
          candidate_pool(corpus, inst.item_id, inst.user_id, model.cfg.max_profile, rng);
      if (cand_ids.empty()) continue;
      const std::vector<std::size_t> ref_ids = reference_ids(
          corpus, inst.user_id, inst.review_index, model.cfg.max_profile, rng);
      if (ref_ids.empty()) continue;

      ExtractionContext ctx;
      ctx.kappa = model.cfg.kappa;
      std::vector<SentenceEncoding> cand_encs;
      cand_encs.reserve(cand_ids.size());
      for (std::size_t id : cand_ids) {
        cand_encs.push_back(model.encoder.encode_sentence(corpus.sentences[id].tokens));
        ctx.candidates.push_back(cand_encs.back().pooled);
      }
      ctx.references = build_references(model, corpus, ref_ids, inst.rating);

      const Tensor log_probs = log_softmax(extraction_logits(ctx), 0);
      std::vector<double> probs(log_probs.values().size());
      for (std::size_t i = 0; i < probs.size(); ++i)
        probs[i] = std::exp(log_probs.values()[i]);

      std::vector<std::vector<double>> ref_values;
      ref_values.reserve(ctx.references.size());
      for (const Tensor& h : ctx.references) ref_values.push_back(h.values());

      std::vector<std::vector<int>> gt_refs;
      gt_refs.reserve(inst.gt_ids.size());
      for (std::size_t id : inst.gt_ids) gt_refs.push_back(corpus.sentences[id].tokens);

      std::vector<SampleOutcome> samples;
      samples.reserve(cfg.mc_samples);
      bool all_zero = true;
      for (std::size_t s = 0; s < cfg.mc_samples; ++s) {
        const std::size_t j = sample_index(probs, rng);
        SampleOutcome sample;
        sample.log_p_ext = pick(log_probs, j);

        // The refinement step and the prototype states enter the decoder as
        // constants: the decoder term trains decoder parameters only, the
        // extractor term trains encoder-side parameters only.
        std::vector<double> x = ctx.candidates[j].values();
        for (std::size_t r = 0; r < model.cfg.refine_steps; ++r)
          x = apply_refinement(x, refine_direction(x, ref_values, model.cfg.kappa));
        const Tensor refined = Tensor::from_vector(x, {model.cfg.dims.text_dim});
        const DecodeResult decoded =
            model.decoder.decode(refined, cand_encs[j].token_states.detach(),
                                 DecodeMode::kSample, model.cfg.max_decode_len, &rng);
        sample.log_p_ref = decoded.log_prob_graph;
        sample.rewards = compute_rewards(decoded.tokens, corpus.sentences[cand_ids[j]].tokens,
                                         gt_refs, corpus.idf, cfg.reward_weights);
        if (sample.rewards.pi != 0.0 || sample.rewards.pi_ext != 0.0 ||
            sample.rewards.pi_ref != 0.0)
          all_zero = false;
        train_reward += sample.rewards.pi;
        samples.push_back(std::move(sample));
      }
      if (all_zero) ++degenerate;
      ++n_instances;

      const Tensor loss = policy_loss(samples, cfg);
      backward(scale(loss, 1.0 / static_cast<double>(cfg.batch_size)));
      ++in_batch;
      if (in_batch == cfg.batch_size && degenerate * 10 > cfg.batch_size * 9)
        std::cerr << "warning: finetune epoch " << epoch
                  << ": rewards are zero for more than 90% of a batch\n";
      if (in_batch == cfg.batch_size) degenerate = 0;
      step_if_batch_full(model, cfg, cfg.lr_finetune, in_batch);
    }
    step_if_batch_full(model, cfg, cfg.lr_finetune, in_batch, /*force=*/true);
    if (n_instances == 0) throw CorpusError("finetune: no usable instances");

    const double val = mean_idf_bleu_1(model, corpus, val_instances, cfg.seed);
    log.epochs.push_back(
        {epoch,
         train_reward / static_cast<double>(n_instances * cfg.mc_samples), val});
    if (val > log.best_val) {
      log.best_val = val;
      log.best_epoch = epoch;
      best = model.store.snapshot_values();
    } else if (epoch - log.best_epoch >= cfg.patience) {
      break;
    }
  }
  model.store.restore_values(best);
  return log;
}

}  // namespace compexp
