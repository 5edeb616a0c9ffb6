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
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace compexp {

class CorpusError : public std::runtime_error {
 public:
  explicit CorpusError(const std::string& what) : std::runtime_error(what) {}
};

/// One raw review line: a user's rated text about one item.
struct ReviewRecord {
  std::size_t review_index = 0;  // position in the input stream
  std::string user_id;
  std::string item_id;
  int rating = 0;
  std::string text;
  std::optional<std::string> aspect;
};

struct ParseResult {
  std::vector<ReviewRecord> records;
  std::vector<std::string> errors;  // one message per skipped line, with line number
};

/// Reads line-delimited records {"user_id","item_id","rating","text"[,"aspect"]}.
/// Malformed lines and out-of-range ratings are collected, not fatal.
ParseResult parse_reviews(std::istream& in, int rating_min, int rating_max);

/// A sentence before vocabulary mapping: lowercased whitespace tokens.
struct RawSentence {
  std::vector<std::string> words;
  int rating = 0;
  std::string user_id;
  std::string item_id;
  std::size_t review_index = 0;
};

/// Splits on sentence-final punctuation (. ! ?), lowercases, tokenizes on
/// whitespace. Every sentence inherits the record's rating. Always returns at
/// least one sentence; an all-punctuation text yields one empty-token sentence
/// that later falls to the length invariant.
std::vector<RawSentence> segment_sentences(const ReviewRecord& record);

/// Repeatedly drops users with fewer than min_user records and items with
/// fewer than min_item records until a fixed point. Throws CorpusError when
/// nothing survives.
std::vector<ReviewRecord> recursive_filter(std::vector<ReviewRecord> records,
                                           std::size_t min_user, std::size_t min_item);

/// Seeded split by review; every sentence of a review stays in one split.
/// Ratios must sum to 1 and every split must be non-empty.
struct SplitResult {
  std::vector<ReviewRecord> train, valid, test;
};
SplitResult split_dataset(const std::vector<ReviewRecord>& records,
                          const std::vector<double>& ratios, std::uint64_t seed);

/// Token <-> id mapping with fixed special ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocab();

  /// Builds from training sentences; words seen fewer than min_freq times
  /// map to unk. Ids are assigned in lexicographic token order after the
  /// four specials.
  static Vocab build(const std::vector<RawSentence>& train, std::size_t min_freq);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;  // throws on bad id
  std::size_t size() const { return id_to_token_.size(); }
  bool is_special(int id) const { return id >= 0 && id <= kEos; }

  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);

 private:
  std::vector<std::string> id_to_token_;
  std::map<std::string, int> token_to_id_;
};

/// A sentence mapped to vocabulary ids, still labeled with its provenance.
struct LabeledSentence {
  std::vector<int> tokens;
  int rating = 0;
  std::string user_id;
  std::string item_id;
  std::size_t review_index = 0;
};

/// Inverse document frequency over training sentences:
/// idf(g) = ln(S / s_g) + 1, where s_g counts sentences containing g.
/// Words unseen in training are treated as occurring once: ln(S) + 1.
class IdfTable {
 public:
  static IdfTable build(const std::vector<LabeledSentence>& train_sentences);

  double value(int token) const;
  double unseen_value() const;
  std::size_t sentence_count() const { return sentence_count_; }
  const std::map<int, std::size_t>& doc_freq() const { return doc_freq_; }

  void save(std::ostream& out) const;
  static IdfTable load(std::istream& in);

 private:
  std::size_t sentence_count_ = 0;
  std::map<int, std::size_t> doc_freq_;
};

/// Profiles hold indices into CorpusData::sentences. They store every entry;
/// capping to max_profile happens at use via sample_entries.
struct UserProfile {
  std::string user_id;
  std::vector<std::size_t> sentence_ids;
};

struct ItemProfile {
  std::string item_id;
  std::vector<std::size_t> sentence_ids;
};

/// Uniform subset of at most max_profile ids, sorted, seed-reproducible.
std::vector<std::size_t> sample_entries(const std::vector<std::size_t>& ids,
                                        std::size_t max_profile, std::mt19937_64& rng);

struct IngestOptions {
  int rating_min = 1;
  int rating_max = 5;
  std::size_t min_user_reviews = 20;
  std::size_t min_item_reviews = 20;
  std::size_t min_freq = 2;
  std::size_t max_sentence_len = 20;
  std::vector<double> split_ratios = {0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

/// Everything downstream code needs, fully deterministic for a given seed.
/// Profiles cover the training split only. The serialized form ("CXCORPUS",
/// version 1) stores vocab, idf, sentences and split ids; profiles are
/// rebuilt on load.
struct CorpusData {
  Vocab vocab;
  IdfTable idf;
  std::vector<LabeledSentence> sentences;
  std::vector<std::size_t> train_ids, valid_ids, test_ids;
  std::map<std::string, UserProfile> user_profiles;
  std::map<std::string, ItemProfile> item_profiles;
  int rating_min = 1;
  int rating_max = 5;
  std::size_t max_sentence_len = 20;

  int rating_range_width() const { return rating_max - rating_min; }

  const UserProfile& user_profile(const std::string& user_id) const;
  const ItemProfile& item_profile(const std::string& item_id) const;
  bool has_user(const std::string& user_id) const { return user_profiles.count(user_id) != 0; }
  bool has_item(const std::string& item_id) const { return item_profiles.count(item_id) != 0; }

  void rebuild_profiles();

  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static CorpusData load(std::istream& in);
  static CorpusData load_file(const std::string& path);
};

/// Full ingestion: filter -> split -> vocab -> map -> idf -> profiles.
CorpusData build_corpus(const std::vector<ReviewRecord>& records, const IngestOptions& opt);

}  // namespace compexp
