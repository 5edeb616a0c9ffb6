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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "compexp/metrics.hpp"
#include "compexp/model.hpp"

namespace compexp {

struct TrainConfig {
  double lambda1 = 1.0;  // extrinsic quality on the decoder term
  double lambda2 = 0.5;  // clipped-recall on the decoder term
  double lambda3 = 1.0;  // extrinsic quality on the extractor term
  double lambda4 = 0.5;  // prototype quality on the extractor term
  std::size_t mc_samples = 4;
  double lr_pretrain = 1e-3;
  double lr_finetune = 1e-4;
  std::size_t epochs_extractor = 20;
  std::size_t epochs_refiner = 30;
  std::size_t epochs_finetune = 5;
  std::size_t batch_size = 16;
  std::size_t patience = 5;
  double clip_norm = 5.0;
  BleuWeights reward_weights = BleuWeights::training();
  std::uint64_t seed = 0;

  void validate() const;  // mc_samples >= 2, lambdas >= 0, ...
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;  // NLL / perplexity / mean IDF-BLEU-1, per phase
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  /// Mean of log(pool size) across validation instances (extractor phase):
  /// the NLL a uniform extractor would score.
  double val_uniform_baseline = 0.0;
};

/// Phase 1: minimize -log P_ext(target) over training sentences. Validation
/// NLL drives early stopping (patience); the best-epoch parameters are kept.
TrainLog pretrain_extractor(Model& model, const CorpusData& corpus, const TrainConfig& cfg);

/// Pairs each training sentence (target) with the cosine-most-similar other
/// sentence of the same item profile (source); ties to the lowest profile
/// index; single-sentence profiles yield nothing.
std::vector<std::pair<std::size_t, std::size_t>> make_refiner_pairs(const CorpusData& corpus,
                                                                    const EncoderNet& encoder);

/// Phase 2: teacher-forced decoder training on (source, target) pairs.
/// Validation perplexity logged per epoch; best-epoch parameters kept.
TrainLog pretrain_refiner(Model& model, const CorpusData& corpus,
                          const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                          const TrainConfig& cfg);

struct RewardBundle {
  double pi = 0.0;      // IDF-BLEU of the decoded explanation
  double pi_ext = 0.0;  // IDF-BLEU of the prototype
  double pi_ref = 0.0;  // clipped-recall aggregate
};

RewardBundle compute_rewards(const std::vector<int>& explanation,
                             const std::vector<int>& prototype,
                             const std::vector<std::vector<int>>& references,
                             const IdfTable& idf, const BleuWeights& weights);

/// One Monte Carlo sample of the hierarchical policy-gradient estimator.
struct SampleOutcome {
  RewardBundle rewards;
  Tensor log_p_ext;  // graph scalar through extractor parameters
  Tensor log_p_ref;  // graph scalar through decoder parameters
};

/// Mean over samples of
///   -[l1 (pi - mean pi) + l2 (pi_ref - mean pi_ref)] log P_ref
///   -[l3 (pi - mean pi) + l4 (pi_ext - mean pi_ext)] log P_ext.
/// Subtracting per-term sample means implements the Monte Carlo baseline.
Tensor policy_loss(const std::vector<SampleOutcome>& samples, const TrainConfig& cfg);

/// One evaluation instance: a review (user, item, rating) with its sentences
/// as ground truth.
struct EvalInstance {
  std::string user_id;
  std::string item_id;
  int rating = 0;
  std::size_t review_index = 0;
  std::vector<std::size_t> gt_ids;
};

std::vector<EvalInstance> group_instances(const CorpusData& corpus,
                                          const std::vector<std::size_t>& split_ids);

/// Mean IDF-BLEU-1 of greedy generations against ground truth; instances
/// with an empty pool or profile are skipped.
double mean_idf_bleu_1(const Model& model, const CorpusData& corpus,
                       const std::vector<EvalInstance>& instances, std::uint64_t seed);

/// Phase 3: hierarchical-reward policy gradient over training reviews, with
/// per-epoch validation IDF-BLEU-1; best-epoch parameters kept.
TrainLog finetune(Model& model, const CorpusData& corpus, const TrainConfig& cfg);

}  // namespace compexp
