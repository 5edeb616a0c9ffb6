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
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "compexp/corpus.hpp"

// Explanation-quality measures over token-id sequences.
//
// Conventions shared by the BLEU family here:
//  * natural logarithm everywhere;
//  * an n-gram order where the candidate has no n-grams at all (sentence
//    shorter than n) is skipped: its weight contributes nothing rather than
//    zeroing the score. A defined-but-zero precision still zeroes the score;
//  * sentence level only, averaged by the caller across instances.

namespace compexp {

/// Per-order weights w_1..w_N. Zero-weight orders are never evaluated.
struct BleuWeights {
  std::vector<double> w;

  /// Reward weighting used during training: {0.8, 0.2, 0, 0}.
  static BleuWeights training() { return {{0.8, 0.2, 0.0, 0.0}}; }
  /// Evaluation preset: uniform 1/k over the first k orders.
  static BleuWeights uniform(std::size_t k) {
    return {std::vector<double>(k, 1.0 / static_cast<double>(k))};
  }
  std::size_t max_order() const { return w.size(); }
};

using Ngram = std::vector<int>;

/// Candidate n-gram counts and their reference-clipped counterparts:
/// clipped(g) = min(count_in_candidate, max over references of count).
std::map<Ngram, std::pair<std::size_t, std::size_t>> clipped_ngram_counts(
    const std::vector<int>& candidate, const std::vector<std::vector<int>>& references,
    std::size_t n);

/// Sentence BLEU with best-match-length brevity (ties to the shorter
/// reference).
double bleu(const std::vector<int>& candidate, const std::vector<std::vector<int>>& references,
            const BleuWeights& weights);

/// IDF-weighted clipped n-gram precision. An n-gram's IDF is the largest IDF
/// of its constituent words. Empty candidate n-gram set -> nullopt (skip).
std::optional<double> idf_precision(const std::vector<int>& candidate,
                                    const std::vector<std::vector<int>>& references,
                                    std::size_t n, const IdfTable& idf);

/// Length brevity against the average reference length:
/// exp(min(1 - ref_len/cand_len, 0)).
double bp_len(double candidate_len, double ref_avg_len);

/// IDF-density brevity: d = mean token IDF; exp(min(1 - d_ref/d_cand, 0)).
/// Reference density pools tokens across all references.
double bp_idf(const std::vector<int>& candidate,
              const std::vector<std::vector<int>>& references, const IdfTable& idf);

/// BP_len * BP_IDF * exp(sum_n w_n log p_n) with IDF-weighted precisions.
/// When corpus_ref_len is set it replaces the per-instance average reference
/// length in BP_len (corpus-wide mode).
double idf_bleu(const std::vector<int>& candidate,
                const std::vector<std::vector<int>>& references, const IdfTable& idf,
                const BleuWeights& weights,
                std::optional<double> corpus_ref_len = std::nullopt);

/// Aggregated clipped recall of reference-supported prototype n-grams by the
/// explanation: a_n = sum IDF*min(clip, count_expl) / sum IDF*clip over
/// prototype n-grams, empty denominator -> a_n = 1; result exp(sum w_n log a_n).
double clipped_recall(const std::vector<int>& explanation, const std::vector<int>& prototype,
                      const std::vector<std::vector<int>>& references, const IdfTable& idf,
                      const BleuWeights& weights);

/// Fraction of tokens that already occurred earlier in the sentence.
double rep_per_len(const std::vector<int>& tokens);
/// 1 - unique_bigrams/total_bigrams; 0 for sentences shorter than 2.
double seq_rep_2(const std::vector<int>& tokens);

/// Mean token IDF of a sentence.
double idf_per_word(const std::vector<int>& tokens, const IdfTable& idf);

struct FeatureScore {
  double precision = 0.0;
  double recall = 0.0;
  bool has_gt_features = false;  // instances without any are excluded from averages
};

/// Set precision/recall of lexicon words mentioned by the explanation against
/// those mentioned in the ground-truth review tokens.
FeatureScore feature_prf(const std::vector<int>& explanation,
                         const std::vector<int>& ground_truth,
                         const std::set<int>& lexicon);

/// One Table-style metrics row (scores reported *100 by the caller).
struct ScoreReport {
  double idf_bleu_1 = 0, idf_bleu_2 = 0, idf_bleu_4 = 0;
  double bleu_1 = 0, bleu_2 = 0, bleu_4 = 0;
  double avg_length = 0;
  double idf_per_word = 0;
  double rep_per_len = 0;
  double seq_rep_2 = 0;
  double feat_precision = 0;
  double feat_recall = 0;
};

}  // namespace compexp
