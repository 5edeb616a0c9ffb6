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

#include "compexp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace compexp {

namespace {

std::map<Ngram, std::size_t> ngram_counts(const std::vector<int>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

double ngram_idf(const Ngram& g, const IdfTable& idf) {
  double best = 0.0;
  for (int t : g) best = std::max(best, idf.value(t));
  return best;
}

/// Reference length whose value is closest to the candidate length; ties go
/// to the shorter reference.
double best_match_length(std::size_t cand_len, const std::vector<std::vector<int>>& refs) {
  double best = static_cast<double>(refs.front().size());
  for (const auto& r : refs) {
    const double len = static_cast<double>(r.size());
    const double d = std::abs(len - static_cast<double>(cand_len));
    const double bd = std::abs(best - static_cast<double>(cand_len));
    if (d < bd || (d == bd && len < best)) best = len;
  }
  return best;
}

double mean_ref_length(const std::vector<std::vector<int>>& refs) {
  double total = 0.0;
  for (const auto& r : refs) total += static_cast<double>(r.size());
  return total / static_cast<double>(refs.size());
}

void check_refs(const std::vector<std::vector<int>>& refs, const char* op) {
  if (refs.empty()) throw std::invalid_argument(std::string(op) + ": no references");
}

}  // namespace

std::map<Ngram, std::pair<std::size_t, std::size_t>> clipped_ngram_counts(
    const std::vector<int>& candidate, const std::vector<std::vector<int>>& references,
    std::size_t n) {
  if (n < 1) throw std::invalid_argument("clipped_ngram_counts: n must be at least 1");
  std::map<Ngram, std::pair<std::size_t, std::size_t>> out;
  const auto cand = ngram_counts(candidate, n);
  if (cand.empty()) return out;
  std::vector<std::map<Ngram, std::size_t>> ref_counts;
  ref_counts.reserve(references.size());
  for (const auto& r : references) ref_counts.push_back(ngram_counts(r, n));
  for (const auto& [g, count] : cand) {
    std::size_t max_ref = 0;
    for (const auto& rc : ref_counts) {
      auto it = rc.find(g);
      if (it != rc.end()) max_ref = std::max(max_ref, it->second);
    }
    out[g] = {count, std::min(count, max_ref)};
  }
  return out;
}

double bleu(const std::vector<int>& candidate, const std::vector<std::vector<int>>& references,
            const BleuWeights& weights) {
  check_refs(references, "bleu");
  if (candidate.empty()) return 0.0;
  double log_prec = 0.0;
  for (std::size_t n = 1; n <= weights.max_order(); ++n) {
    const double w = weights.w[n - 1];
    if (w <= 0.0) continue;
    const auto counts = clipped_ngram_counts(candidate, references, n);
    if (counts.empty()) continue;  // no n-grams of this order: skip
    std::size_t total = 0, clipped = 0;
    for (const auto& [g, pair] : counts) {
      total += pair.first;
      clipped += pair.second;
    }
    if (clipped == 0) return 0.0;
    log_prec += w * std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }
  const double r = best_match_length(candidate.size(), references);
  const double c = static_cast<double>(candidate.size());
  const double bp = std::exp(std::min(1.0 - r / c, 0.0));
  return bp * std::exp(log_prec);
}

std::optional<double> idf_precision(const std::vector<int>& candidate,
                                    const std::vector<std::vector<int>>& references,
                                    std::size_t n, const IdfTable& idf) {
  const auto counts = clipped_ngram_counts(candidate, references, n);
  if (counts.empty()) return std::nullopt;
  double num = 0.0, den = 0.0;
  for (const auto& [g, pair] : counts) {
    const double w = ngram_idf(g, idf);
    num += w * static_cast<double>(pair.second);
    den += w * static_cast<double>(pair.first);
  }
  return num / den;
}

double bp_len(double candidate_len, double ref_avg_len) {
  if (candidate_len < 1.0) throw std::invalid_argument("bp_len: empty candidate");
  return std::exp(std::min(1.0 - ref_avg_len / candidate_len, 0.0));
}

double bp_idf(const std::vector<int>& candidate,
              const std::vector<std::vector<int>>& references, const IdfTable& idf) {
  check_refs(references, "bp_idf");
  const double d_cand = idf_per_word(candidate, idf);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& r : references) {
    for (int t : r) total += idf.value(t);
    count += r.size();
  }
  if (count == 0 || d_cand <= 0.0) return 1.0;
  const double d_ref = total / static_cast<double>(count);
  return std::exp(std::min(1.0 - d_ref / d_cand, 0.0));
}

double idf_bleu(const std::vector<int>& candidate,
                const std::vector<std::vector<int>>& references, const IdfTable& idf,
                const BleuWeights& weights, std::optional<double> corpus_ref_len) {
  check_refs(references, "idf_bleu");
  if (candidate.empty()) return 0.0;
  double log_prec = 0.0;
  for (std::size_t n = 1; n <= weights.max_order(); ++n) {
    const double w = weights.w[n - 1];
    if (w <= 0.0) continue;
    const auto p = idf_precision(candidate, references, n, idf);
    if (!p.has_value()) continue;
    if (*p == 0.0) return 0.0;
    log_prec += w * std::log(*p);
  }
  const double ref_len = corpus_ref_len.value_or(mean_ref_length(references));
  return bp_len(static_cast<double>(candidate.size()), ref_len) *
         bp_idf(candidate, references, idf) * std::exp(log_prec);
}

double clipped_recall(const std::vector<int>& explanation, const std::vector<int>& prototype,
                      const std::vector<std::vector<int>>& references, const IdfTable& idf,
                      const BleuWeights& weights) {
  if (prototype.empty()) throw std::invalid_argument("clipped_recall: empty prototype");
  double log_recall = 0.0;
  for (std::size_t n = 1; n <= weights.max_order(); ++n) {
    const double w = weights.w[n - 1];
    if (w <= 0.0) continue;
    const auto proto_counts = clipped_ngram_counts(prototype, references, n);
    const auto expl_counts = ngram_counts(explanation, n);
    double num = 0.0, den = 0.0;
    for (const auto& [g, pair] : proto_counts) {
      const double idf_w = ngram_idf(g, idf);
      const double clip = static_cast<double>(pair.second);
      auto it = expl_counts.find(g);
      const double in_expl = it == expl_counts.end() ? 0.0 : static_cast<double>(it->second);
      num += idf_w * std::min(clip, in_expl);
      den += idf_w * clip;
    }
    if (den == 0.0) continue;  // nothing to retain at this order: a_n = 1
    if (num == 0.0) return 0.0;
    log_recall += w * std::log(num / den);
  }
  return std::exp(log_recall);
}

double rep_per_len(const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("rep_per_len: empty sentence");
  std::set<int> seen;
  std::size_t repeats = 0;
  for (int t : tokens) {
    if (!seen.insert(t).second) ++repeats;
  }
  return static_cast<double>(repeats) / static_cast<double>(tokens.size());
}

double seq_rep_2(const std::vector<int>& tokens) {
  if (tokens.size() < 2) return 0.0;
  std::set<Ngram> uniq;
  const std::size_t total = tokens.size() - 1;
  for (std::size_t i = 0; i + 2 <= tokens.size(); ++i)
    uniq.insert({tokens[i], tokens[i + 1]});
  return 1.0 - static_cast<double>(uniq.size()) / static_cast<double>(total);
}

double idf_per_word(const std::vector<int>& tokens, const IdfTable& idf) {
  if (tokens.empty()) return 0.0;
  double total = 0.0;
  for (int t : tokens) total += idf.value(t);
  return total / static_cast<double>(tokens.size());
}

FeatureScore feature_prf(const std::vector<int>& explanation,
                         const std::vector<int>& ground_truth,
                         const std::set<int>& lexicon) {
  if (lexicon.empty()) throw std::invalid_argument("feature_prf: empty lexicon");
  std::set<int> expl_feats, gt_feats;
  for (int t : explanation)
    if (lexicon.count(t)) expl_feats.insert(t);
  for (int t : ground_truth)
    if (lexicon.count(t)) gt_feats.insert(t);
  FeatureScore score;
  score.has_gt_features = !gt_feats.empty();
  std::size_t overlap = 0;
  for (int t : expl_feats)
    if (gt_feats.count(t)) ++overlap;
  score.precision = expl_feats.empty()
                        ? 0.0
                        : static_cast<double>(overlap) / static_cast<double>(expl_feats.size());
  score.recall = gt_feats.empty()
                     ? 0.0
                     : static_cast<double>(overlap) / static_cast<double>(gt_feats.size());
  return score;
}

}  // namespace compexp
