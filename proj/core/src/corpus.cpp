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

#include "compexp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "compexp/io.hpp"
#include "compexp/rng.hpp"

namespace compexp {

namespace {
constexpr char kMagic[] = "CXCORPUS";
constexpr std::uint32_t kVersion = 1;
}  // namespace

ParseResult parse_reviews(std::istream& in, int rating_min, int rating_max) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      result.errors.push_back("line " + std::to_string(line_no) + ": malformed record");
      continue;
    }
    ReviewRecord rec;
    rec.review_index = result.records.size();
    bool ok = true;
    for (const char* field : {"user_id", "item_id", "text"}) {
      if (!j.contains(field) || !j[field].is_string() || j[field].get<std::string>().empty()) {
        result.errors.push_back("line " + std::to_string(line_no) + ": missing field \"" +
                                field + "\"");
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    if (!j.contains("rating") || !j["rating"].is_number_integer()) {
      result.errors.push_back("line " + std::to_string(line_no) + ": missing field \"rating\"");
      continue;
    }
    rec.user_id = j["user_id"].get<std::string>();
    rec.item_id = j["item_id"].get<std::string>();
    rec.text = j["text"].get<std::string>();
    rec.rating = j["rating"].get<int>();
    if (rec.rating < rating_min || rec.rating > rating_max) {
      result.errors.push_back("line " + std::to_string(line_no) + ": rating " +
                              std::to_string(rec.rating) + " outside [" +
                              std::to_string(rating_min) + ", " + std::to_string(rating_max) +
                              "]");
      continue;
    }
    if (j.contains("aspect") && j["aspect"].is_string())
      rec.aspect = j["aspect"].get<std::string>();
    result.records.push_back(std::move(rec));
  }
  return result;
}

std::vector<RawSentence> segment_sentences(const ReviewRecord& record) {
  std::vector<RawSentence> out;
  std::string chunk;
  auto flush = [&](const std::string& text) {
    std::vector<std::string> words;
    std::string word;
    for (char c : text) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!word.empty()) {
          words.push_back(word);
          word.clear();
        }
      } else {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      }
    }
    if (!word.empty()) words.push_back(std::move(word));
    if (words.empty()) return;
    out.push_back({std::move(words), record.rating, record.user_id, record.item_id,
                   record.review_index});
  };
  for (char c : record.text) {
    if (c == '.' || c == '!' || c == '?') {
      flush(chunk);
      chunk.clear();
    } else {
      chunk.push_back(c);
    }
  }
  flush(chunk);
  if (out.empty())
    out.push_back({{}, record.rating, record.user_id, record.item_id, record.review_index});
  return out;
}

std::vector<ReviewRecord> recursive_filter(std::vector<ReviewRecord> records,
                                           std::size_t min_user, std::size_t min_item) {
  if (min_user < 1 || min_item < 1)
    throw std::invalid_argument("recursive_filter: thresholds must be at least 1");
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<std::string, std::size_t> user_counts, item_counts;
    for (const auto& r : records) {
      ++user_counts[r.user_id];
      ++item_counts[r.item_id];
    }
    std::vector<ReviewRecord> kept;
    kept.reserve(records.size());
    for (auto& r : records) {
      if (user_counts[r.user_id] < min_user || item_counts[r.item_id] < min_item) {
        changed = true;
      } else {
        kept.push_back(std::move(r));
      }
    }
    records = std::move(kept);
  }
  if (records.empty())
    throw CorpusError("recursive_filter: no records survive thresholds min_user=" +
                      std::to_string(min_user) + ", min_item=" + std::to_string(min_item));
  return records;
}

SplitResult split_dataset(const std::vector<ReviewRecord>& records,
                          const std::vector<double>& ratios, std::uint64_t seed) {
  if (ratios.size() != 3)
    throw std::invalid_argument("split_dataset: expected 3 ratios");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: ratios sum to " + std::to_string(total) +
                                ", expected 1");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(derive_seed(seed, "split"));
  shuffle_vec(order, rng);

  const std::size_t n = records.size();
  const std::size_t n_train = static_cast<std::size_t>(ratios[0] * static_cast<double>(n));
  const std::size_t n_valid = static_cast<std::size_t>(ratios[1] * static_cast<double>(n));
  const std::size_t n_test = n - n_train - n_valid;
  if (n_train == 0 || n_valid == 0 || n_test == 0)
    throw CorpusError("split_dataset: degenerate ratios leave an empty split (n=" +
                      std::to_string(n) + ")");

  SplitResult split;
  for (std::size_t i = 0; i < n; ++i) {
    const ReviewRecord& r = records[order[i]];
    if (i < n_train)
      split.train.push_back(r);
    else if (i < n_train + n_valid)
      split.valid.push_back(r);
    else
      split.test.push_back(r);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

Vocab::Vocab() : id_to_token_{"<pad>", "<unk>", "<bos>", "<eos>"} {
  for (int i = 0; i < 4; ++i) token_to_id_[id_to_token_[i]] = i;
}

Vocab Vocab::build(const std::vector<RawSentence>& train, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : train)
    for (const auto& w : s.words) ++counts[w];
  Vocab v;
  for (const auto& [word, count] : counts) {
    if (count < min_freq) continue;
    const int id = static_cast<int>(v.id_to_token_.size());
    v.id_to_token_.push_back(word);
    v.token_to_id_[word] = id;
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw std::out_of_range("Vocab: id " + std::to_string(id) + " out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocab::save(std::ostream& out) const {
  io::write_u64(out, id_to_token_.size());
  for (const auto& t : id_to_token_) io::write_string(out, t);
}

Vocab Vocab::load(std::istream& in) {
  const std::uint64_t n = io::read_u64(in, "vocab size");
  if (n < 4) throw io::FormatError("vocab: fewer entries than the 4 specials");
  Vocab v;
  v.id_to_token_.clear();
  v.token_to_id_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string t = io::read_string(in, "vocab token");
    v.token_to_id_[t] = static_cast<int>(i);
    v.id_to_token_.push_back(std::move(t));
  }
  return v;
}

// ---------------------------------------------------------------------------
// IdfTable
// ---------------------------------------------------------------------------

IdfTable IdfTable::build(const std::vector<LabeledSentence>& train_sentences) {
  if (train_sentences.empty()) throw CorpusError("IdfTable: empty training split");
  IdfTable t;
  t.sentence_count_ = train_sentences.size();
  for (const auto& s : train_sentences) {
    std::vector<int> uniq(s.tokens);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (int id : uniq) ++t.doc_freq_[id];
  }
  return t;
}

double IdfTable::value(int token) const {
  auto it = doc_freq_.find(token);
  const double sg = it == doc_freq_.end() ? 1.0 : static_cast<double>(it->second);
  return std::log(static_cast<double>(sentence_count_) / sg) + 1.0;
}

double IdfTable::unseen_value() const {
  return std::log(static_cast<double>(sentence_count_)) + 1.0;
}

void IdfTable::save(std::ostream& out) const {
  io::write_u64(out, sentence_count_);
  io::write_u64(out, doc_freq_.size());
  for (const auto& [token, count] : doc_freq_) {
    io::write_i32(out, token);
    io::write_u64(out, count);
  }
}

IdfTable IdfTable::load(std::istream& in) {
  IdfTable t;
  t.sentence_count_ = io::read_u64(in, "idf sentence count");
  const std::uint64_t n = io::read_u64(in, "idf entry count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const int token = io::read_i32(in, "idf token");
    t.doc_freq_[token] = io::read_u64(in, "idf count");
  }
  return t;
}

// ---------------------------------------------------------------------------
// Profiles and corpus assembly
// ---------------------------------------------------------------------------

std::vector<std::size_t> sample_entries(const std::vector<std::size_t>& ids,
                                        std::size_t max_profile, std::mt19937_64& rng) {
  if (ids.size() <= max_profile) return ids;
  std::vector<std::size_t> picked = sample_subset(ids.size(), max_profile, rng);
  std::vector<std::size_t> out;
  out.reserve(max_profile);
  for (std::size_t p : picked) out.push_back(ids[p]);
  return out;
}

const UserProfile& CorpusData::user_profile(const std::string& user_id) const {
  auto it = user_profiles.find(user_id);
  if (it == user_profiles.end())
    throw CorpusError("unknown user profile \"" + user_id + "\"");
  return it->second;
}

const ItemProfile& CorpusData::item_profile(const std::string& item_id) const {
  auto it = item_profiles.find(item_id);
  if (it == item_profiles.end())
    throw CorpusError("unknown item profile \"" + item_id + "\"");
  return it->second;
}

void CorpusData::rebuild_profiles() {
  user_profiles.clear();
  item_profiles.clear();
  for (std::size_t id : train_ids) {
    const LabeledSentence& s = sentences[id];
    auto& up = user_profiles[s.user_id];
    up.user_id = s.user_id;
    up.sentence_ids.push_back(id);
    auto& ip = item_profiles[s.item_id];
    ip.item_id = s.item_id;
    ip.sentence_ids.push_back(id);
  }
}

namespace {

void map_records(const std::vector<ReviewRecord>& records, const Vocab& vocab,
                 std::size_t max_sentence_len, std::vector<LabeledSentence>& sentences,
                 std::vector<std::size_t>& ids) {
  for (const auto& rec : records) {
    for (auto& raw : segment_sentences(rec)) {
      if (raw.words.empty()) continue;  // length invariant: drop empty sentences
      LabeledSentence s;
      s.rating = raw.rating;
      s.user_id = raw.user_id;
      s.item_id = raw.item_id;
      s.review_index = raw.review_index;
      for (const auto& w : raw.words) {
        if (s.tokens.size() >= max_sentence_len) break;
        s.tokens.push_back(vocab.id(w));
      }
      ids.push_back(sentences.size());
      sentences.push_back(std::move(s));
    }
  }
}

void write_sentence(std::ostream& out, const LabeledSentence& s) {
  io::write_u64(out, s.review_index);
  io::write_string(out, s.user_id);
  io::write_string(out, s.item_id);
  io::write_i32(out, s.rating);
  io::write_u64(out, s.tokens.size());
  for (int t : s.tokens) io::write_i32(out, t);
}

LabeledSentence read_sentence(std::istream& in) {
  LabeledSentence s;
  s.review_index = io::read_u64(in, "sentence review index");
  s.user_id = io::read_string(in, "sentence user");
  s.item_id = io::read_string(in, "sentence item");
  s.rating = io::read_i32(in, "sentence rating");
  const std::uint64_t len = io::read_u64(in, "sentence length");
  s.tokens.resize(len);
  for (auto& t : s.tokens) t = io::read_i32(in, "sentence token");
  return s;
}

void write_ids(std::ostream& out, const std::vector<std::size_t>& ids) {
  io::write_u64(out, ids.size());
  for (std::size_t id : ids) io::write_u64(out, id);
}

std::vector<std::size_t> read_ids(std::istream& in, const char* what) {
  const std::uint64_t n = io::read_u64(in, what);
  std::vector<std::size_t> ids(n);
  for (auto& id : ids) id = io::read_u64(in, what);
  return ids;
}

}  // namespace

CorpusData build_corpus(const std::vector<ReviewRecord>& records, const IngestOptions& opt) {
  std::vector<ReviewRecord> filtered =
      recursive_filter(records, opt.min_user_reviews, opt.min_item_reviews);
  SplitResult split = split_dataset(filtered, opt.split_ratios, opt.seed);

  std::vector<RawSentence> train_raw;
  for (const auto& rec : split.train)
    for (auto& s : segment_sentences(rec))
      if (!s.words.empty()) train_raw.push_back(std::move(s));
  if (train_raw.empty()) throw CorpusError("build_corpus: no usable training sentences");

  CorpusData corpus;
  corpus.rating_min = opt.rating_min;
  corpus.rating_max = opt.rating_max;
  corpus.max_sentence_len = opt.max_sentence_len;
  corpus.vocab = Vocab::build(train_raw, opt.min_freq);

  map_records(split.train, corpus.vocab, opt.max_sentence_len, corpus.sentences,
              corpus.train_ids);
  map_records(split.valid, corpus.vocab, opt.max_sentence_len, corpus.sentences,
              corpus.valid_ids);
  map_records(split.test, corpus.vocab, opt.max_sentence_len, corpus.sentences,
              corpus.test_ids);

  std::vector<LabeledSentence> train_sentences;
  train_sentences.reserve(corpus.train_ids.size());
  for (std::size_t id : corpus.train_ids) train_sentences.push_back(corpus.sentences[id]);
  corpus.idf = IdfTable::build(train_sentences);
  corpus.rebuild_profiles();
  return corpus;
}

void CorpusData::save(std::ostream& out) const {
  out.write(kMagic, 8);
  io::write_u32(out, kVersion);
  io::write_i32(out, rating_min);
  io::write_i32(out, rating_max);
  io::write_u64(out, max_sentence_len);
  vocab.save(out);
  idf.save(out);
  io::write_u64(out, sentences.size());
  for (const auto& s : sentences) write_sentence(out, s);
  write_ids(out, train_ids);
  write_ids(out, valid_ids);
  write_ids(out, test_ids);
  if (!out) throw io::FormatError("CorpusData::save: write failed");
}

void CorpusData::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("CorpusData: cannot open \"" + path + "\" for writing");
  save(out);
}

CorpusData CorpusData::load(std::istream& in) {
  io::expect_magic(in, kMagic, "corpus file");
  const std::uint32_t version = io::read_u32(in, "corpus version");
  if (version != kVersion)
    throw io::FormatError("corpus file: unsupported version " + std::to_string(version));
  CorpusData corpus;
  corpus.rating_min = io::read_i32(in, "rating min");
  corpus.rating_max = io::read_i32(in, "rating max");
  corpus.max_sentence_len = io::read_u64(in, "max sentence len");
  corpus.vocab = Vocab::load(in);
  corpus.idf = IdfTable::load(in);
  const std::uint64_t n = io::read_u64(in, "sentence count");
  corpus.sentences.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) corpus.sentences.push_back(read_sentence(in));
  corpus.train_ids = read_ids(in, "train ids");
  corpus.valid_ids = read_ids(in, "valid ids");
  corpus.test_ids = read_ids(in, "test ids");
  corpus.rebuild_profiles();
  return corpus;
}

CorpusData CorpusData::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("CorpusData: cannot open \"" + path + "\"");
  return load(in);
}

}  // namespace compexp
