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
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "compexp/corpus.hpp"
#include "compexp/model.hpp"
#include "compexp/training.hpp"

namespace compexp {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Dataset paths and preprocessing thresholds ("data" section).
struct DataConfig {
  std::string reviews;                  // line-delimited review records
  std::optional<std::string> features;  // feature lexicon, one word per line
  int rating_min = 1;
  int rating_max = 5;
  std::size_t min_user_reviews = 20;
  std::size_t min_item_reviews = 20;
  std::size_t min_freq = 2;
  std::size_t max_sentence_len = 20;
  std::vector<double> split_ratios = {0.8, 0.1, 0.1};
};

/// Scoring options ("metrics" section).
struct MetricsConfig {
  /// Brevity reference length pooled over the whole split instead of
  /// per instance.
  bool corpus_level_ref_len = false;
  std::vector<std::size_t> eval_orders = {1, 2, 4};
};

/// One experiment, loadable from a JSON file. Unknown keys anywhere are
/// rejected; every referenced input file must exist at load time. Relative
/// input paths are resolved against the config file's directory; out_dir is
/// taken as written.
struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;  // dims.vocab and dims.r_max are filled from the corpus
  std::optional<std::string> embedding_file;  // "token v1 .. vE" per line
  TrainConfig train;
  MetricsConfig metrics;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  /// Parses `text`; relative paths resolve against base_dir ("" = cwd).
  static ExperimentConfig parse(const std::string& text, const std::string& base_dir);
  static ExperimentConfig load_file(const std::string& path);

  IngestOptions ingest_options() const;
};

/// Reads the "token v1 .. vE" embedding format; every line must carry
/// `dim` values. Tokens absent from the vocabulary are dropped.
std::map<int, std::vector<double>> load_embeddings(const std::string& path, const Vocab& vocab,
                                                   std::size_t dim);

/// Reads a feature lexicon (one word per line) into vocabulary ids.
/// Out-of-vocabulary words are dropped; duplicates collapse.
std::set<int> load_feature_lexicon(const std::string& path, const Vocab& vocab);

}  // namespace compexp
