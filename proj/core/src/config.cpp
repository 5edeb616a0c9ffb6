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

#include "compexp/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace compexp {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

/// Tracks which keys of one JSON object were consumed; leftovers are errors.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_ + ": expected an object");
  }

  const std::string& path() const { return path_; }

  const json* find(const char* key) {
    auto it = node_.find(key);
    if (it == node_.end()) return nullptr;
    consumed_.push_back(key);
    return &*it;
  }

  void read_string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(where(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void read_bool(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(where(key) + ": expected a boolean");
      out = v->get<bool>();
    }
  }

  void read_int(const char* key, int& out) {
    if (const json* v = find(key)) out = as_int(*v, key);
  }

  template <typename T>
  void read_uint(const char* key, T& out) {
    if (const json* v = find(key)) {
      const long long raw = as_int(*v, key);
      if (raw < 0) fail(where(key) + ": expected a nonnegative integer");
      out = static_cast<T>(raw);
    }
  }

  void read_double(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(where(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void read_double_array(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(where(key) + ": expected an array of numbers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number()) fail(where(key) + ": expected an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }

  void read_uint_array(const char* key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(where(key) + ": expected an array of integers");
      out.clear();
      for (const json& e : *v) {
        const long long raw = as_int(e, key);
        if (raw < 0) fail(where(key) + ": expected nonnegative integers");
        out.push_back(static_cast<std::size_t>(raw));
      }
    }
  }

  void finish() {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      bool known = false;
      for (const std::string& k : consumed_)
        if (k == it.key()) known = true;
      if (!known) fail(path_ + ": unknown key \"" + it.key() + "\"");
    }
  }

 private:
  std::string where(const char* key) const { return path_ + "." + key; }

  long long as_int(const json& v, const char* key) const {
    if (!v.is_number_integer() && !v.is_number_unsigned())
      fail(where(key) + ": expected an integer");
    return v.get<long long>();
  }

  const json& node_;
  std::string path_;
  std::vector<std::string> consumed_;
};

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty() || base_dir.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

void check_exists(const std::string& path, const std::string& key) {
  if (!std::filesystem::exists(path))
    fail(key + ": referenced file does not exist: " + path);
}

void parse_data(Section& root, DataConfig& out, const std::string& base_dir) {
  const json* node = root.find("data");
  if (node == nullptr) return;
  Section s(*node, "data");
  s.read_string("reviews", out.reviews);
  std::string features;
  s.read_string("features", features);
  if (!features.empty()) out.features = features;
  s.read_int("rating_min", out.rating_min);
  s.read_int("rating_max", out.rating_max);
  s.read_uint("min_user_reviews", out.min_user_reviews);
  s.read_uint("min_item_reviews", out.min_item_reviews);
  s.read_uint("min_freq", out.min_freq);
  s.read_uint("max_sentence_len", out.max_sentence_len);
  s.read_double_array("split_ratios", out.split_ratios);
  s.finish();

  if (out.rating_min >= out.rating_max) fail("data: rating_min must be below rating_max");
  if (out.max_sentence_len == 0) fail("data.max_sentence_len: must be positive");
  if (out.split_ratios.size() != 3) fail("data.split_ratios: expected three ratios");

  out.reviews = resolve_path(base_dir, out.reviews);
  if (!out.reviews.empty()) check_exists(out.reviews, "data.reviews");
  if (out.features) {
    *out.features = resolve_path(base_dir, *out.features);
    check_exists(*out.features, "data.features");
  }
}

void parse_model(Section& root, ExperimentConfig& out, const std::string& base_dir) {
  const json* node = root.find("model");
  if (node == nullptr) return;
  Section s(*node, "model");
  s.read_uint("embed", out.model.dims.embed);
  s.read_uint("hidden", out.model.dims.hidden);
  s.read_uint("rating_embed", out.model.dims.rating_embed);
  s.read_uint("text_dim", out.model.dims.text_dim);
  s.read_double("kappa", out.model.kappa);
  s.read_uint("max_profile", out.model.max_profile);
  s.read_uint("max_decode_len", out.model.max_decode_len);
  s.read_uint("refine_steps", out.model.refine_steps);
  std::string embeddings;
  s.read_string("embedding_file", embeddings);
  if (!embeddings.empty()) out.embedding_file = embeddings;
  s.finish();

  if (out.model.dims.embed == 0 || out.model.dims.hidden == 0 ||
      out.model.dims.rating_embed == 0 || out.model.dims.text_dim == 0)
    fail("model: dimensions must be positive");
  if (out.model.kappa < 0) fail("model.kappa: must be nonnegative");
  if (out.model.max_profile < 2) fail("model.max_profile: must be at least 2");
  if (out.model.max_decode_len == 0) fail("model.max_decode_len: must be positive");

  if (out.embedding_file) {
    *out.embedding_file = resolve_path(base_dir, *out.embedding_file);
    check_exists(*out.embedding_file, "model.embedding_file");
  }
}

void parse_train(Section& root, TrainConfig& out) {
  const json* node = root.find("train");
  if (node == nullptr) return;
  Section s(*node, "train");
  s.read_double("lambda1", out.lambda1);
  s.read_double("lambda2", out.lambda2);
  s.read_double("lambda3", out.lambda3);
  s.read_double("lambda4", out.lambda4);
  s.read_uint("mc_samples", out.mc_samples);
  s.read_double("lr_pretrain", out.lr_pretrain);
  s.read_double("lr_finetune", out.lr_finetune);
  s.read_uint("epochs_extractor", out.epochs_extractor);
  s.read_uint("epochs_refiner", out.epochs_refiner);
  s.read_uint("epochs_finetune", out.epochs_finetune);
  s.read_uint("batch_size", out.batch_size);
  s.read_uint("patience", out.patience);
  s.read_double("clip_norm", out.clip_norm);
  std::vector<double> weights;
  s.read_double_array("reward_weights", weights);
  if (!weights.empty()) {
    if (weights.size() != 4) fail("train.reward_weights: expected exactly four weights");
    for (std::size_t i = 0; i < 4; ++i) out.reward_weights.w[i] = weights[i];
  }
  s.finish();
  out.validate();
}

void parse_metrics(Section& root, MetricsConfig& out) {
  const json* node = root.find("metrics");
  if (node == nullptr) return;
  Section s(*node, "metrics");
  s.read_bool("corpus_level_ref_len", out.corpus_level_ref_len);
  s.read_uint_array("eval_orders", out.eval_orders);
  s.finish();

  if (out.eval_orders.empty()) fail("metrics.eval_orders: must not be empty");
  for (std::size_t k : out.eval_orders)
    if (k < 1 || k > 4) fail("metrics.eval_orders: orders must lie in 1..4");
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& base_dir) {
  json root_node = json::parse(text, nullptr, false);
  if (root_node.is_discarded()) fail("config: not valid JSON");

  ExperimentConfig cfg;
  Section root(root_node, "config");
  parse_data(root, cfg.data, base_dir);
  parse_model(root, cfg, base_dir);
  parse_train(root, cfg.train);
  parse_metrics(root, cfg.metrics);
  root.read_uint("seed", cfg.seed);
  root.read_string("out_dir", cfg.out_dir);
  root.finish();

  cfg.train.seed = cfg.seed;
  if (cfg.out_dir.empty()) fail("out_dir: must not be empty");
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("config: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), std::filesystem::path(path).parent_path().string());
}

IngestOptions ExperimentConfig::ingest_options() const {
  IngestOptions opt;
  opt.rating_min = data.rating_min;
  opt.rating_max = data.rating_max;
  opt.min_user_reviews = data.min_user_reviews;
  opt.min_item_reviews = data.min_item_reviews;
  opt.min_freq = data.min_freq;
  opt.max_sentence_len = data.max_sentence_len;
  opt.split_ratios = data.split_ratios;
  opt.seed = seed;
  return opt;
}

std::map<int, std::vector<double>> load_embeddings(const std::string& path, const Vocab& vocab,
                                                   std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("embeddings: cannot open " + path);
  std::map<int, std::vector<double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream parts(line);
    std::string token;
    parts >> token;
    std::vector<double> vec;
    double v = 0.0;
    while (parts >> v) vec.push_back(v);
    if (vec.size() != dim) {
      std::ostringstream msg;
      msg << "embeddings: line " << line_no << ": expected " << dim << " values, got "
          << vec.size();
      throw ConfigError(msg.str());
    }
    const int id = vocab.id(token);
    if (id != Vocab::kUnk || token == vocab.token(Vocab::kUnk)) out[id] = std::move(vec);
  }
  return out;
}

std::set<int> load_feature_lexicon(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw ConfigError("features: cannot open " + path);
  std::set<int> out;
  std::string word;
  while (in >> word) {
    const int id = vocab.id(word);
    if (id != Vocab::kUnk || word == vocab.token(Vocab::kUnk)) out.insert(id);
  }
  return out;
}

}  // namespace compexp
