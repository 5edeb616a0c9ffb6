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

#include <iosfwd>
#include <string>
#include <vector>

#include "compexp/config.hpp"

// Subcommand implementations. Each is a pure function of (config, artifacts
// under out_dir, seed): re-runs produce byte-identical artifacts and output.
// Fatal problems surface as exceptions; the CLI maps them to exit codes.

namespace compexp {

namespace artifact {
inline constexpr const char* kCorpus = "corpus.bin";
inline constexpr const char* kExtractor = "extractor.params";
inline constexpr const char* kRefiner = "refiner.params";
inline constexpr const char* kFinetuned = "finetuned.params";
}  // namespace artifact

/// Parses raw reviews, builds the corpus, writes out_dir/corpus.bin and
/// prints a summary (users, items, reviews, sentences, rating range, splits).
/// Skipped input lines are reported on `err`.
void cmd_ingest(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

/// Phase 1 on the ingested corpus; writes extractor.params and a per-epoch
/// TSV log.
void cmd_pretrain_extractor(const ExperimentConfig& cfg, std::ostream& out);

/// Phase 2, continuing from extractor.params; writes refiner.params.
void cmd_pretrain_refiner(const ExperimentConfig& cfg, std::ostream& out);

/// Phase 3, continuing from refiner.params; writes finetuned.params.
void cmd_finetune(const ExperimentConfig& cfg, std::ostream& out);

/// Generates one explanation per requested item. Requests are line-delimited
/// {"user_id": ..., "items": [{"item_id": ..., "rating": ...}, ...]}; output
/// records (item_id, rating, prototype, explanation) keep request order, one
/// JSON object per line, also written to out_dir/generations.jsonl. A bad
/// request line or an item with an empty candidate pool yields an error
/// record and does not disturb the rest.
void cmd_generate(const ExperimentConfig& cfg, const std::string& requests_path,
                  const std::string& params_name, std::ostream& out, std::ostream& err);

/// Scores greedy generations on a split ("train", "valid" or "test") and
/// prints a metrics table (scores scaled to 0..100) with a "human" row
/// computed on the ground-truth sentences. Also writes out_dir/evaluation.tsv.
void cmd_evaluate(const ExperimentConfig& cfg, const std::string& params_name,
                  const std::string& split, std::ostream& out);

/// Rating-perturbation sweep: for each sigma, ratings get rounded clamped
/// Gaussian noise, generations are re-scored, and one curve row
/// (sigma, BLEU-1, IDF-BLEU-1) is emitted. Sigma 0 reproduces cmd_evaluate's
/// order-1 scores exactly. Also writes out_dir/perturbation.tsv.
void cmd_perturb(const ExperimentConfig& cfg, const std::string& params_name,
                 const std::vector<double>& sigmas, std::ostream& out);

}  // namespace compexp
