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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "compexp/corpus.hpp"
#include "compexp/encoder.hpp"
#include "compexp/extractor.hpp"
#include "compexp/params.hpp"
#include "compexp/refiner.hpp"

namespace compexp {

struct ModelConfig {
  ModelDims dims;
  double kappa = 3.0;
  std::size_t max_profile = 10;
  std::size_t max_decode_len = 25;
  std::size_t refine_steps = 1;
};

/// Parameters plus the two network views over them.
struct Model {
  ModelConfig cfg;
  ParamStore store;
  EncoderNet encoder;
  DecoderNet decoder;

  /// Fresh random initialization (optionally seeding word vectors from a
  /// pretrained id -> vector map).
  static Model init(const ModelConfig& cfg, std::uint64_t seed,
                    const std::map<int, std::vector<double>>& pretrained = {});
  /// Wraps an existing parameter store (e.g. loaded from a checkpoint).
  static Model adopt(const ModelConfig& cfg, ParamStore store);

 private:
  Model(const ModelConfig& cfg, ParamStore s);
};

/// Evaluation-time candidate pool: the item's training sentences minus any
/// authored by the target user, capped at max_profile by seeded sampling.
/// Sorted sentence ids; empty when nothing remains.
std::vector<std::size_t> candidate_pool(const CorpusData& corpus, const std::string& item_id,
                                        const std::string& exclude_user,
                                        std::size_t max_profile, std::mt19937_64& rng);

/// Training-time pool for extractor pretraining: the item's sentences with
/// the target guaranteed to survive the cap.
std::vector<std::size_t> training_pool(const CorpusData& corpus, const std::string& item_id,
                                       std::size_t target_id, std::size_t max_profile,
                                       std::mt19937_64& rng);

/// Reference sentences for user_id, excluding an optional review (to keep a
/// training target out of its own references), capped at max_profile.
/// Unknown users fall back to a uniform sample of the global training pool.
std::vector<std::size_t> reference_ids(const CorpusData& corpus, const std::string& user_id,
                                       std::optional<std::size_t> exclude_review,
                                       std::size_t max_profile, std::mt19937_64& rng);

/// Encodes references and fuses each with its rating-difference embedding.
std::vector<Tensor> build_references(const Model& model, const CorpusData& corpus,
                                     const std::vector<std::size_t>& ref_ids,
                                     int target_rating);

struct GenerationResult {
  bool ok = false;
  std::string error;
  std::size_t prototype_id = 0;     // sentence id of the extracted prototype
  std::vector<int> prototype;       // its tokens
  std::vector<int> explanation;     // decoded tokens
  double ext_log_prob = 0.0;
  double dec_log_prob = 0.0;
};

/// Full extract -> refine -> decode pass for one (user, item, rating).
/// Argmax extraction and greedy decoding; rng only affects pool capping and
/// the cold-start fallback.
GenerationResult generate_one(const Model& model, const CorpusData& corpus,
                              const std::string& user_id, const std::string& item_id,
                              int rating, std::mt19937_64& rng);

}  // namespace compexp
